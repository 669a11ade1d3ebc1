"""Audio ingestion and preprocessing: WAV loading, resampling to 16 kHz,
peak normalization and RMS-gated speech segmentation.

All functions are pure: buffers are never modified in place, so they are safe
to hand to concurrent workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

TARGET_RATE = 16_000

# silence gate defaults (threshold relative to digital full scale)
SILENCE_THRESHOLD_DBFS = -35.0
MIN_GAP_MS = 300
RMS_WINDOW_MS = 25
RMS_HOP_MS = 10


class AudioError(Exception):
    """Base class for audio I/O and format errors."""


class UnreadableFileError(AudioError):
    """File missing, truncated, or not a RIFF/WAVE container."""


class UnsupportedFormatError(AudioError):
    """WAV codec or layout this reader does not handle."""


class UnsupportedRateError(AudioError):
    """Source sample rate below the supported minimum."""


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono sampled signal. Samples are float64 in [-1, +1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        arr = np.asarray(self.samples, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_ms(self) -> int:
        return round(1000 * len(self.samples) / self.sample_rate)

    def slice_ms(self, start_ms: float, end_ms: float) -> np.ndarray:
        """View of the samples covering [start_ms, end_ms)."""
        a = max(0, int(round(start_ms * self.sample_rate / 1000.0)))
        b = min(len(self.samples), int(round(end_ms * self.sample_rate / 1000.0)))
        return self.samples[a:b]


@dataclass(frozen=True, order=True)
class SegmentBounds:
    """Half-open [start_ms, end_ms) span of detected speech."""

    start_ms: int
    end_ms: int

    def __post_init__(self):
        if self.start_ms < 0 or self.end_ms <= self.start_ms:
            raise ValueError(f"invalid bounds [{self.start_ms}, {self.end_ms})")

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


def _decode_pcm(raw: bytes, bits: int, audio_format: int) -> np.ndarray:
    if audio_format == 3:  # IEEE float
        if bits != 32:
            raise UnsupportedFormatError(f"{bits}-bit float WAV not supported")
        data = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        return np.clip(data, -1.0, 1.0)
    if audio_format != 1:
        raise UnsupportedFormatError(f"WAV audio format tag {audio_format} not supported")
    if bits == 8:
        data = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
        return (data - 128.0) / 128.0
    if bits == 16:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8)
        n = len(b) // 3
        b = b[: n * 3].reshape(n, 3)
        vals = (
            b[:, 0].astype(np.int32)
            | (b[:, 1].astype(np.int32) << 8)
            | (b[:, 2].astype(np.int32) << 16)
        )
        vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
        return vals.astype(np.float64) / float(1 << 23)
    if bits == 32:
        return np.frombuffer(raw, dtype="<i4").astype(np.float64) / float(1 << 31)
    raise UnsupportedFormatError(f"{bits}-bit integer WAV not supported")


def load_wav(path: str | Path) -> AudioBuffer:
    """Read a PCM RIFF/WAVE file into a mono AudioBuffer.

    Accepts 1- or 2-channel files with 8/16/24/32-bit integer or 32-bit
    float samples. Stereo is downmixed by averaging the channels; samples
    are scaled to [-1, +1].
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 12 or blob[0:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise UnreadableFileError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        chunk_id = blob[pos : pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8 : pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise UnreadableFileError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise UnreadableFileError(f"{path}: missing fmt or data chunk")
    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if audio_format == 0xFFFE:  # WAVE_FORMAT_EXTENSIBLE: sub-format GUID decides
        raise UnsupportedFormatError(f"{path}: extensible WAV not supported")
    if n_channels not in (1, 2):
        raise UnsupportedFormatError(f"{path}: {n_channels} channels not supported")

    try:
        flat = _decode_pcm(data, bits, audio_format)
    except UnsupportedFormatError as exc:
        raise UnsupportedFormatError(f"{path}: {exc}") from None
    if n_channels == 2:
        n = len(flat) // 2
        flat = flat[: n * 2].reshape(n, 2).mean(axis=1)
    return AudioBuffer(flat, sample_rate)


def _sinc_kernel(up: int, down: int, taps_per_phase: int = 64, beta: float = 8.6) -> np.ndarray:
    # Kaiser-windowed sinc at the upsampled rate; odd length keeps the
    # group delay an integer so resample_poly centers the output exactly.
    n = taps_per_phase * up
    if n % 2 == 0:
        n += 1
    m = np.arange(n) - (n - 1) / 2.0
    cutoff = 1.0 / max(up, down)  # relative to upsampled Nyquist
    return cutoff * np.sinc(cutoff * m) * np.kaiser(n, beta)


def resample_to_16k(buf: AudioBuffer) -> AudioBuffer:
    """Band-limited resampling to 16 kHz (polyphase windowed sinc).

    Returns the input unchanged when it is already at 16 kHz. Rates below
    8 kHz are refused.
    """
    if buf.sample_rate == TARGET_RATE:
        return buf
    if buf.sample_rate < 8_000:
        raise UnsupportedRateError(f"source rate {buf.sample_rate} Hz below 8 kHz minimum")
    g = gcd(buf.sample_rate, TARGET_RATE)
    up, down = TARGET_RATE // g, buf.sample_rate // g
    out = resample_poly(buf.samples, up, down, window=_sinc_kernel(up, down))
    return AudioBuffer(out, TARGET_RATE)


def peak_normalize(buf: AudioBuffer) -> AudioBuffer:
    """Scale so the absolute peak is exactly 1.0.

    Silent buffers come back unchanged so batch jobs survive silent files.
    """
    if len(buf.samples) == 0:
        raise ValueError("cannot normalize an empty buffer")
    peak = float(np.max(np.abs(buf.samples)))
    if peak == 0.0 or peak == 1.0:
        return buf
    return AudioBuffer(buf.samples / peak, buf.sample_rate)


def _window_rms_db(samples: np.ndarray, win: int, hop: int) -> np.ndarray:
    n_windows = (len(samples) - win) // hop + 1
    if n_windows <= 0:
        return np.empty(0)
    sq = np.concatenate([[0.0], np.cumsum(samples * samples)])
    starts = np.arange(n_windows) * hop
    mean_sq = (sq[starts + win] - sq[starts]) / win
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(mean_sq)


def detect_speech_segments(
    buf: AudioBuffer,
    threshold_dbfs: float = SILENCE_THRESHOLD_DBFS,
    min_gap_ms: int = MIN_GAP_MS,
) -> list[SegmentBounds]:
    """Silence-gated segmentation: maximal runs of windows whose RMS exceeds
    the threshold, with sub-gap silences merged into the surrounding run.

    Windows are 25 ms with a 10 ms hop; a gap between two speech runs shorter
    than ``min_gap_ms`` does not split them. Digital silence yields an empty
    list.
    """
    win = int(round(buf.sample_rate * RMS_WINDOW_MS / 1000.0))
    hop = int(round(buf.sample_rate * RMS_HOP_MS / 1000.0))
    rms_db = _window_rms_db(buf.samples, win, hop)
    speech = rms_db > threshold_dbfs
    runs: list[list[int]] = []  # [start_ms, end_ms] over window extents
    for i in np.flatnonzero(speech):
        start = int(i) * RMS_HOP_MS
        end = start + RMS_WINDOW_MS
        if runs and start <= runs[-1][1]:
            runs[-1][1] = end
        else:
            runs.append([start, end])
    merged: list[list[int]] = []
    for run in runs:
        if merged and run[0] - merged[-1][1] < min_gap_ms:
            merged[-1][1] = run[1]
        else:
            merged.append(run)
    return [SegmentBounds(a, b) for a, b in merged]


def speaking_rate(word_count: int, net_duration_s: float) -> float:
    """Words per second over net speech time (pauses already removed)."""
    if net_duration_s <= 0:
        raise ValueError(f"net duration must be positive, got {net_duration_s}")
    return word_count / net_duration_s
