"""Per-syntagm prosodic deltas against a baseline synthetic voice.

The four emitted quantities per syntagm:

  pitch:  s = 12*log2(f0_nat / f0_baseline), clipped to [-0.7*P, P] semitones,
          re-scaled to a percentage (2**(s/12) - 1) * 100. The baseline is the
          rolling median of the synthetic track's per-syntagm f0, so the delta
          tells the voice how far to move from its own typical pitch.
  volume: v = (10**(dL/20) - 1) * 100 with dL = natural loudness baseline
          minus the synthetic syntagm's loudness, clipped to [-V, +V].
  rate:   r = (n/d_nat - n/d_syn) / (n/d_syn) * 100; slow-downs on syntagms
          longer than 1 s are amplified, speed-ups attenuated, then clamped to
          [-R, +0.5*R].
  break:  the natural trailing pause, passed through raw.

Pitch and rate series are exponentially smoothed (alpha = 0.2) with an 8%
per-syntagm jump clamp; volume is not smoothed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace

from .syntagms import Syntagm

FLAG_NO_PITCH = "no-pitch"
FLAG_NO_LOUDNESS = "no-loudness"
FLAG_INJECTED_BREAK = "injected-break"


class PairingError(ValueError):
    """Natural and synthetic syntagm streams do not match."""


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for delta computation. Field names double as config-file keys."""

    pitch_clip_semitones: float = 1.5
    volume_clip_pct: float = 10.0
    rate_clip_pct: float = 10.0
    smoothing_alpha: float = 0.2
    max_jump_pct: float = 8.0
    baseline_window: int = 10
    slowdown_gain: float = 1.5
    speedup_gain: float = 0.5
    long_syntagm_s: float = 1.0

    def __post_init__(self):
        if self.pitch_clip_semitones <= 0:
            raise ValueError("pitch_clip_semitones must be > 0")
        if self.volume_clip_pct <= 0 or self.rate_clip_pct <= 0:
            raise ValueError("volume/rate clip bounds must be > 0")
        if not (0 < self.smoothing_alpha <= 1):
            raise ValueError("smoothing_alpha must be in (0, 1]")
        if self.max_jump_pct <= 0:
            raise ValueError("max_jump_pct must be > 0")
        if self.baseline_window < 1:
            raise ValueError("baseline_window must be >= 1")

    def pitch_bounds_pct(self) -> tuple[float, float]:
        """Percent range implied by the semitone clip [-0.7*P, P]."""
        p = self.pitch_clip_semitones
        return (
            (2.0 ** (-0.7 * p / 12.0) - 1.0) * 100.0,
            (2.0 ** (p / 12.0) - 1.0) * 100.0,
        )

    @classmethod
    def from_mapping(cls, mapping: dict) -> "PipelineConfig":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = int(value) if key == "baseline_window" else float(value)
        return cls(**kwargs)

    def replace(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class SyntagmFeatures:
    """Measured per-syntagm features for one voice."""

    median_f0_hz: float | None
    loudness_lufs: float | None
    rate_wps: float
    word_count: int
    net_duration_s: float


@dataclass(frozen=True)
class ProsodyDelta:
    pitch_pct: float
    rate_pct: float
    volume_pct: float
    break_ms: int
    flags: tuple[str, ...] = ()


def rolling_baseline(values: list[float | None], w: int) -> list[float]:
    """Median over a sliding window of up to w values centered at each index.

    Windows are clamped into the list at the edges, so every window holds w
    entries when the list is long enough; with w covering the whole list the
    baseline is the global median everywhere. None entries are skipped; a
    window with no present values falls back to the global median. Raises if
    every value is absent.
    """
    if not values:
        raise ValueError("cannot compute a baseline of an empty series")
    present = sorted(v for v in values if v is not None)
    if not present:
        raise ValueError("cannot compute a baseline: all values absent")
    n = len(values)
    global_median = _median(present)
    if n <= w:
        return [global_median] * n
    out = []
    for i in range(n):
        start = min(max(i - w // 2, 0), n - w)
        window = sorted(v for v in values[start : start + w] if v is not None)
        out.append(_median(window) if window else global_median)
    return out


def _median(sorted_values: list[float]) -> float:
    n = len(sorted_values)
    mid = n // 2
    if n % 2:
        return float(sorted_values[mid])
    return (sorted_values[mid - 1] + sorted_values[mid]) / 2.0


def pitch_delta(f0: float, f0_baseline: float, cfg: PipelineConfig) -> float:
    """Semitone offset against the baseline, clipped, as a percent change."""
    if f0 <= 0 or f0_baseline <= 0:
        raise ValueError(f"frequencies must be positive, got {f0}, {f0_baseline}")
    p = cfg.pitch_clip_semitones
    s = 12.0 * math.log2(f0 / f0_baseline)
    s = min(max(s, -0.7 * p), p)
    return (2.0 ** (s / 12.0) - 1.0) * 100.0


def volume_delta(loudness_baseline: float, loudness_syn: float, cfg: PipelineConfig) -> float:
    """Loudness difference mapped to a linear gain percent, clipped to +-V."""
    if not (math.isfinite(loudness_baseline) and math.isfinite(loudness_syn)):
        raise ValueError("loudness values must be finite")
    dl = loudness_baseline - loudness_syn
    v = (10.0 ** (dl / 20.0) - 1.0) * 100.0
    return min(max(v, -cfg.volume_clip_pct), cfg.volume_clip_pct)


def rate_delta(word_count: int, d_nat_s: float, d_syn_s: float, cfg: PipelineConfig) -> float:
    """Relative words-per-second change, shaped and clamped.

    Negative values (slow-downs) on syntagms longer than ``long_syntagm_s``
    are multiplied by ``slowdown_gain``; positive values by ``speedup_gain``.
    The result is clamped to [-R, +0.5*R]: accelerations get the tighter
    ceiling.
    """
    if word_count < 1:
        raise ValueError("word_count must be >= 1")
    if d_nat_s <= 0 or d_syn_s <= 0:
        raise ValueError(f"durations must be positive, got {d_nat_s}, {d_syn_s}")
    wps_nat = word_count / d_nat_s
    wps_syn = word_count / d_syn_s
    r = (wps_nat - wps_syn) / wps_syn * 100.0
    if r < 0 and d_nat_s > cfg.long_syntagm_s:
        r *= cfg.slowdown_gain
    elif r > 0:
        r *= cfg.speedup_gain
    return min(max(r, -cfg.rate_clip_pct), 0.5 * cfg.rate_clip_pct)


def smooth_series(
    values: list[float], cfg: PipelineConfig, *, clamp_raw_first: bool = False
) -> list[float]:
    """Exponential smoothing with a per-step jump clamp.

    x~[0] = x[0]; x~[i] = alpha*x[i] + (1-alpha)*x~[i-1], then any step larger
    than ``max_jump_pct`` is clamped to the previous value +- the jump, and the
    clamped value feeds the next step. ``clamp_raw_first`` instead clamps the
    raw series before smoothing (ablation path).
    """
    if not values:
        raise ValueError("cannot smooth an empty series")
    if clamp_raw_first:
        values = _clamp_jumps(values, cfg.max_jump_pct)
    out = [float(values[0])]
    alpha, jump = cfg.smoothing_alpha, cfg.max_jump_pct
    for x in values[1:]:
        smoothed = alpha * x + (1.0 - alpha) * out[-1]
        step = smoothed - out[-1]
        if not clamp_raw_first and abs(step) > jump:
            smoothed = out[-1] + math.copysign(jump, step)
        out.append(smoothed)
    return out


def _clamp_jumps(values: list[float], jump: float) -> list[float]:
    out = [float(values[0])]
    for x in values[1:]:
        step = x - out[-1]
        if abs(step) > jump:
            x = out[-1] + math.copysign(jump, step)
        out.append(float(x))
    return out


def annotate_corpus(
    nat: list[tuple[Syntagm, SyntagmFeatures]],
    syn: list[tuple[Syntagm, SyntagmFeatures]],
    cfg: PipelineConfig = PipelineConfig(),
) -> list[ProsodyDelta]:
    """Compute the per-syntagm delta list for paired natural/synthetic tracks.

    The two streams must be the same transcript: equal length and matching
    word sequences (case-insensitive). Missing features (unvoiced pitch,
    silent loudness) yield a zero delta plus a flag instead of an error, so
    one bad syntagm cannot abort a corpus run.
    """
    if len(nat) != len(syn):
        raise PairingError(
            f"natural has {len(nat)} syntagms, synthetic has {len(syn)}"
        )
    for i, ((s_nat, _), (s_syn, _)) in enumerate(zip(nat, syn)):
        nat_words = [w.text.casefold() for w in s_nat.words]
        syn_words = [w.text.casefold() for w in s_syn.words]
        if nat_words != syn_words:
            raise PairingError(
                f"word sequences diverge at syntagm {i}: "
                f"{s_nat.text!r} vs {s_syn.text!r}"
            )
    if not nat:
        return []

    n = len(nat)
    f0_syn = [feats.median_f0_hz for _, feats in syn]
    loud_nat = [feats.loudness_lufs for _, feats in nat]
    f0_baseline = (
        rolling_baseline(f0_syn, cfg.baseline_window)
        if any(v is not None for v in f0_syn)
        else [None] * n
    )
    loud_baseline = (
        rolling_baseline(loud_nat, cfg.baseline_window)
        if any(v is not None for v in loud_nat)
        else [None] * n
    )

    pitch_raw: list[float] = []
    rate_raw: list[float] = []
    volumes: list[float] = []
    flag_sets: list[list[str]] = []
    for i in range(n):
        (_, feats_nat), (_, feats_syn) = nat[i], syn[i]
        flags: list[str] = []
        if feats_nat.median_f0_hz is not None and f0_baseline[i] is not None:
            pitch_raw.append(pitch_delta(feats_nat.median_f0_hz, f0_baseline[i], cfg))
        else:
            pitch_raw.append(0.0)
            flags.append(FLAG_NO_PITCH)
        if feats_syn.loudness_lufs is not None and loud_baseline[i] is not None:
            volumes.append(volume_delta(loud_baseline[i], feats_syn.loudness_lufs, cfg))
        else:
            volumes.append(0.0)
            flags.append(FLAG_NO_LOUDNESS)
        rate_raw.append(
            rate_delta(
                feats_nat.word_count, feats_nat.net_duration_s, feats_syn.net_duration_s, cfg
            )
        )
        if nat[i][0].pause_injected:
            flags.append(FLAG_INJECTED_BREAK)
        flag_sets.append(flags)

    pitch_smooth = smooth_series(pitch_raw, cfg)
    rate_smooth = smooth_series(rate_raw, cfg)
    return [
        ProsodyDelta(
            pitch_pct=pitch_smooth[i],
            rate_pct=rate_smooth[i],
            volume_pct=volumes[i],
            break_ms=nat[i][0].trailing_pause_ms,
            flags=tuple(flag_sets[i]),
        )
        for i in range(n)
    ]


def delta_record(text: str, delta: ProsodyDelta, **extra) -> dict:
    """JSON-safe record for one annotated syntagm (the training-data view)."""
    rec = dict(extra)
    rec.update(
        text=text,
        pitch_pct=round(delta.pitch_pct, 6),
        rate_pct=round(delta.rate_pct, 6),
        volume_pct=round(delta.volume_pct, 6),
        break_ms=delta.break_ms,
        flags=list(delta.flags),
    )
    return rec


def deltas_to_jsonl(records: list[dict]) -> str:
    lines = [json.dumps(rec, ensure_ascii=False, sort_keys=True) for rec in records]
    return "\n".join(lines) + ("\n" if lines else "")


def read_delta_records(text: str) -> list[dict]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: bad delta record: {exc}") from None
        for key in ("pitch_pct", "rate_pct", "volume_pct", "break_ms"):
            if key not in rec:
                raise ValueError(f"line {lineno}: delta record missing {key!r}")
        records.append(rec)
    return records
