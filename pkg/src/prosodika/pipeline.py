"""End-to-end annotation pipeline for one natural/synthetic pair.

Wiring: load and preprocess both WAVs, silence-segment the natural audio,
parse both TextGrids into syntagms, measure per-syntagm features on both
voices, derive deltas, and emit one SSML fragment per audio segment. All
steps are deterministic, so a pair can be processed on any worker and reruns
are byte-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .audio import (
    AudioBuffer,
    SegmentBounds,
    detect_speech_segments,
    load_wav,
    peak_normalize,
    resample_to_16k,
    speaking_rate,
)
from .loudness import SILENCE, SegmentTooShortError, integrated_loudness
from .pitch import F0Track, estimate_f0_track, median_f0
from .prosody import (
    PipelineConfig,
    SyntagmFeatures,
    annotate_corpus,
    delta_record,
    deltas_to_jsonl,
)
from .ssml import EmitOptions, emit
from .syntagms import (
    FunctionWordLexicon,
    Syntagm,
    filter_function_word_pauses,
    segment_syntagms,
    tokens_from_tier,
)
from .textgrid import TextGridTier, read_textgrid


class ManifestError(ValueError):
    """Malformed job manifest."""


@dataclass(frozen=True)
class PairSpec:
    name: str
    natural_wav: Path
    synthetic_wav: Path
    textgrid_nat: Path
    textgrid_syn: Path
    output_dir: Path
    words_tier: str | None = None


@dataclass(frozen=True)
class PairResult:
    name: str
    n_segments: int
    n_syntagms: int
    n_flagged: int
    records: list[dict]
    ssml_lines: list[str]
    log_lines: list[str]


def load_manifest(path: str | Path) -> tuple[list[PairSpec], dict]:
    """Read the job manifest: pair file lists plus optional config overrides."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(data, dict) or "pairs" not in data:
        raise ManifestError(f"{path}: manifest must be an object with a 'pairs' list")
    base_out = data.get("output_dir")
    overrides = data.get("config", {})
    if not isinstance(overrides, dict):
        raise ManifestError(f"{path}: 'config' must be an object")
    pairs = []
    for i, entry in enumerate(data["pairs"]):
        required = ("natural_wav", "synthetic_wav", "textgrid_nat", "textgrid_syn")
        missing = [k for k in required if k not in entry]
        if missing:
            raise ManifestError(f"{path}: pair {i} missing {missing}")
        out_dir = entry.get("output_dir", base_out)
        if out_dir is None:
            raise ManifestError(f"{path}: pair {i} has no output_dir (and no default)")
        root = path.parent
        pairs.append(
            PairSpec(
                name=entry.get("name", f"pair{i:03d}"),
                natural_wav=root / entry["natural_wav"],
                synthetic_wav=root / entry["synthetic_wav"],
                textgrid_nat=root / entry["textgrid_nat"],
                textgrid_syn=root / entry["textgrid_syn"],
                output_dir=root / out_dir,
                words_tier=entry.get("words_tier"),
            )
        )
    return pairs, overrides


def prepare_audio(path: str | Path) -> AudioBuffer:
    """Load, resample to 16 kHz, and peak-normalize."""
    return peak_normalize(resample_to_16k(load_wav(path)))


def pick_words_tier(tiers: list[TextGridTier], name: str | None) -> TextGridTier:
    if not tiers:
        raise ValueError("TextGrid has no interval tiers")
    if name is not None:
        for tier in tiers:
            if tier.name == name:
                return tier
        raise ValueError(f"no tier named {name!r}")
    for tier in tiers:
        if tier.name.casefold() in ("words", "word", "mots"):
            return tier
    return tiers[0]


def syntagms_from_textgrid(
    path: str | Path, lexicon: FunctionWordLexicon, tier_name: str | None = None
) -> list[Syntagm]:
    tier = pick_words_tier(read_textgrid(path), tier_name)
    tokens = filter_function_word_pauses(tokens_from_tier(tier), lexicon)
    return segment_syntagms(tokens)


def measure_features(
    buf: AudioBuffer, track: F0Track, syntagms: list[Syntagm]
) -> list[SyntagmFeatures]:
    """Per-syntagm f0 median, loudness, and speaking rate for one voice."""
    out = []
    for s in syntagms:
        bounds = SegmentBounds(s.start_ms, s.end_ms)
        f0 = median_f0(track, bounds)
        try:
            lufs = integrated_loudness(buf, bounds)
        except SegmentTooShortError:
            lufs = None
        if lufs == SILENCE:
            lufs = None
        out.append(
            SyntagmFeatures(
                median_f0_hz=f0,
                loudness_lufs=lufs,
                rate_wps=speaking_rate(s.word_count, s.net_duration_s),
                word_count=s.word_count,
                net_duration_s=s.net_duration_s,
            )
        )
    return out


def assign_segments(syntagms: list[Syntagm], segments: list[SegmentBounds]) -> list[int]:
    """Index of the audio segment each syntagm belongs to (max time overlap,
    nearest midpoint as fallback, 0 when no segments were detected)."""
    if not segments:
        return [0] * len(syntagms)
    out = []
    for s in syntagms:
        best, best_overlap = None, 0
        for k, seg in enumerate(segments):
            overlap = min(s.end_ms, seg.end_ms) - max(s.start_ms, seg.start_ms)
            if overlap > best_overlap:
                best, best_overlap = k, overlap
        if best is None:
            mid = (s.start_ms + s.end_ms) / 2.0
            best = min(
                range(len(segments)),
                key=lambda k: abs((segments[k].start_ms + segments[k].end_ms) / 2.0 - mid),
            )
        out.append(best)
    return out


def annotate_pair(
    pair: PairSpec,
    cfg: PipelineConfig,
    lexicon: FunctionWordLexicon,
    emit_options: EmitOptions,
) -> PairResult:
    nat_buf = prepare_audio(pair.natural_wav)
    syn_buf = prepare_audio(pair.synthetic_wav)
    segments = detect_speech_segments(nat_buf)

    nat_syntagms = syntagms_from_textgrid(pair.textgrid_nat, lexicon, pair.words_tier)
    syn_syntagms = syntagms_from_textgrid(pair.textgrid_syn, lexicon, pair.words_tier)

    nat_track = estimate_f0_track(nat_buf)
    syn_track = estimate_f0_track(syn_buf)
    nat_feats = measure_features(nat_buf, nat_track, nat_syntagms)
    syn_feats = measure_features(syn_buf, syn_track, syn_syntagms)

    deltas = annotate_corpus(
        list(zip(nat_syntagms, nat_feats)), list(zip(syn_syntagms, syn_feats)), cfg
    )
    seg_of = assign_segments(nat_syntagms, segments)

    records = [
        delta_record(
            s.text,
            d,
            pair=pair.name,
            segment=seg_of[i],
            start_ms=s.start_ms,
            end_ms=s.end_ms,
            word_count=s.word_count,
        )
        for i, (s, d) in enumerate(zip(nat_syntagms, deltas))
    ]
    ssml_lines = []
    for k in sorted(set(seg_of)):
        group = [
            (nat_syntagms[i].text, deltas[i]) for i in range(len(deltas)) if seg_of[i] == k
        ]
        ssml_lines.append(emit(group, emit_options))

    n_flagged = sum(1 for d in deltas if d.flags)
    log_lines = [
        f"pair: {pair.name}",
        f"natural_wav: {pair.natural_wav}",
        f"synthetic_wav: {pair.synthetic_wav}",
        f"textgrid_nat: {pair.textgrid_nat}",
        f"textgrid_syn: {pair.textgrid_syn}",
        "config:",
    ]
    log_lines += [f"  {f.name} = {getattr(cfg, f.name)}" for f in fields(cfg)]
    log_lines += [
        f"segments: {len(segments)}",
        f"syntagms: {len(deltas)}",
        f"flagged: {n_flagged}",
    ]
    return PairResult(
        name=pair.name,
        n_segments=len(segments),
        n_syntagms=len(deltas),
        n_flagged=n_flagged,
        records=records,
        ssml_lines=ssml_lines,
        log_lines=log_lines,
    )


def write_atomic(path: Path, content: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f"{path.name}.tmp.{os.getpid()}")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)


def write_pair_result(result: PairResult, out_dir: Path):
    write_atomic(out_dir / f"{result.name}.deltas.jsonl", deltas_to_jsonl(result.records))
    write_atomic(out_dir / f"{result.name}.ssml", "\n".join(result.ssml_lines) + "\n")
    write_atomic(out_dir / f"{result.name}.log", "\n".join(result.log_lines) + "\n")
