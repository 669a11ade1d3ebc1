"""Fundamental frequency tracking.

The estimator is a difference-function autocorrelation with cumulative-mean
normalization (YIN-style): per frame, d(tau) is the energy of the residual
between the frame and its tau-shifted copy, normalized by its running mean.
A frame is voiced when the normalized difference dips below the confidence
threshold inside the [fmin, fmax] lag range; the dip location is refined by
parabolic interpolation and converted to Hz.

Everything is vectorized over frames; long files are processed in batches to
bound memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer, SegmentBounds

VOICING_THRESHOLD = 0.15
_BATCH_FRAMES = 4096


@dataclass(frozen=True)
class F0Frame:
    time_ms: float
    f0_hz: float | None
    voiced: bool

    def __post_init__(self):
        if self.voiced != (self.f0_hz is not None):
            raise ValueError("f0_hz must be present exactly when voiced")


@dataclass(frozen=True)
class F0Track:
    frames: tuple[F0Frame, ...]

    def voiced_values(self, bounds: SegmentBounds | None = None) -> list[float]:
        out = []
        for fr in self.frames:
            if bounds is not None and not (bounds.start_ms <= fr.time_ms < bounds.end_ms):
                continue
            if fr.voiced:
                out.append(fr.f0_hz)
        return out


def _cmndf_batch(frames: np.ndarray, w: int, lag_max: int) -> np.ndarray:
    """Cumulative-mean-normalized difference function, rows = frames."""
    n, frame_len = frames.shape
    nfft = 1
    while nfft < frame_len * 2:
        nfft *= 2
    # cross-correlation of the w-sample window against the full frame
    spec_full = np.fft.rfft(frames, nfft, axis=1)
    spec_win = np.fft.rfft(frames[:, :w], nfft, axis=1)
    cross = np.fft.irfft(spec_full * np.conj(spec_win), nfft, axis=1)[:, : lag_max + 1]
    sq = np.concatenate([np.zeros((n, 1)), np.cumsum(frames * frames, axis=1)], axis=1)
    e0 = sq[:, w] - sq[:, 0]
    lags = np.arange(lag_max + 1)
    e_tau = sq[:, lags + w] - sq[:, lags]
    diff = np.maximum(e0[:, None] + e_tau - 2.0 * cross, 0.0)
    running = np.cumsum(diff[:, 1:], axis=1)
    tau = np.arange(1, lag_max + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(running > 0.0, diff[:, 1:] * tau[None, :] / running, 1.0)
    return np.concatenate([np.ones((n, 1)), norm], axis=1)


def _pick_f0(row: np.ndarray, lag_min: int, lag_max: int, sample_rate: int,
             fmin: float, fmax: float, threshold: float) -> float | None:
    j = lag_min
    dip = None
    while j <= lag_max:
        if row[j] < threshold:
            while j + 1 <= lag_max and row[j + 1] < row[j]:
                j += 1
            dip = j
            break
        j += 1
    if dip is None:
        return None
    if 0 < dip < lag_max:
        a, b, c = row[dip - 1], row[dip], row[dip + 1]
        denom = a - 2.0 * b + c
        delta = 0.5 * (a - c) / denom if abs(denom) > 1e-12 else 0.0
        delta = float(np.clip(delta, -0.5, 0.5))
    else:
        delta = 0.0
    f0 = sample_rate / (dip + delta)
    return float(min(max(f0, fmin), fmax))


def estimate_f0_track(
    buf: AudioBuffer,
    frame_ms: float = 40,
    hop_ms: float = 10,
    fmin: float = 60,
    fmax: float = 400,
    threshold: float = VOICING_THRESHOLD,
) -> F0Track:
    """Track f0 over the buffer, one frame per hop.

    The frame must span at least two periods of ``fmin``; frame times are
    frame centers. Unvoiced frames (no confident dip) carry no f0.
    """
    if frame_ms < 2000.0 / fmin:
        raise ValueError(
            f"frame_ms={frame_ms} shorter than two fmin periods ({2000.0 / fmin:.1f} ms)"
        )
    if not (0 < fmin < fmax):
        raise ValueError(f"need 0 < fmin < fmax, got [{fmin}, {fmax}]")
    sr = buf.sample_rate
    frame_len = int(round(sr * frame_ms / 1000.0))
    hop = int(round(sr * hop_ms / 1000.0))
    w = frame_len // 2
    lag_max = min(w, int(np.ceil(sr / fmin)))
    lag_min = max(2, int(sr // fmax))
    n_frames = max(0, (len(buf.samples) - frame_len) // hop + 1)

    frames_out: list[F0Frame] = []
    for base in range(0, n_frames, _BATCH_FRAMES):
        count = min(_BATCH_FRAMES, n_frames - base)
        idx = (np.arange(count)[:, None] * hop + base * hop) + np.arange(frame_len)[None, :]
        cmndf = _cmndf_batch(buf.samples[idx], w, lag_max)
        for k in range(count):
            i = base + k
            time_ms = (i * hop + frame_len / 2.0) * 1000.0 / sr
            f0 = _pick_f0(cmndf[k], lag_min, lag_max, sr, fmin, fmax, threshold)
            frames_out.append(F0Frame(time_ms, f0, f0 is not None))
    return F0Track(tuple(frames_out))


def median_f0(track: F0Track, bounds: SegmentBounds) -> float | None:
    """Median of voiced-frame f0 inside the bounds; None when none are voiced.

    Even counts use the midpoint of the two central values.
    """
    values = track.voiced_values(bounds)
    if not values:
        return None
    return float(np.median(values))
