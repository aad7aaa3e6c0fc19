"""WAV ingestion/emission and the STFT / iSTFT analysis-synthesis pipeline.

The transform uses center padding (reflect, win_len // 2 per side), a
periodic Hann analysis window by default, and weighted overlap-add with
window-square normalization on the synthesis side.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidInputError,
    NonInvertibleWindowError,
    ShapeError,
    WavParseError,
)

__all__ = [
    "Waveform",
    "ComplexSpec",
    "MagPhase",
    "read_wav",
    "write_wav",
    "hann_window",
    "stft",
    "istft",
    "decompose",
    "recompose",
    "compress_magnitude",
    "snr_db",
]


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidInputError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInputError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise InvalidInputError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass
class ComplexSpec:
    """One-sided complex spectrogram: real/imag planes of shape (T, F)."""

    re: np.ndarray
    im: np.ndarray
    fft_len: int
    win_len: int
    hop: int
    window: np.ndarray

    def __post_init__(self) -> None:
        self.re = np.asarray(self.re, dtype=np.float64)
        self.im = np.asarray(self.im, dtype=np.float64)
        if self.re.shape != self.im.shape or self.re.ndim != 2:
            raise ShapeError(f"re/im must share a (T, F) shape, got {self.re.shape} / {self.im.shape}")
        if self.re.shape[1] != self.fft_len // 2 + 1:
            raise ShapeError(
                f"F={self.re.shape[1]} inconsistent with one-sided fft_len={self.fft_len}"
            )
        self.window = np.asarray(self.window, dtype=np.float64)
        if self.window.shape != (self.win_len,):
            raise ShapeError(f"window length {self.window.shape} != win_len {self.win_len}")

    @property
    def frames(self) -> int:
        return self.re.shape[0]

    def complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def scaled(self, s: float) -> "ComplexSpec":
        return ComplexSpec(self.re * s, self.im * s, self.fft_len, self.win_len, self.hop, self.window)


@dataclass
class MagPhase:
    mag: np.ndarray
    phase: np.ndarray
    # transform metadata carried along so recompose() is self-contained
    fft_len: int = 0
    win_len: int = 0
    hop: int = 0
    window: np.ndarray | None = None


# ---------------------------------------------------------------------------
# WAV (RIFF, PCM16 mono little-endian)

def read_wav(data: bytes) -> Waveform:
    """Parse a RIFF/WAVE PCM16 mono byte stream into a Waveform."""
    if len(data) < 12 or data[:4] != b"RIFF":
        raise WavParseError("missing RIFF magic in chunk id")
    if data[8:12] != b"WAVE":
        raise WavParseError(f"RIFF form type is {data[8:12]!r}, expected b'WAVE'")
    pos = 12
    fmt = None
    pcm = None
    rate = None
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavParseError(f"chunk {cid!r} truncated: declared {size}, got {len(body)} bytes")
        if cid == b"fmt ":
            if size < 16:
                raise WavParseError(f"fmt chunk too short ({size} bytes)")
            codec, channels, rate, _byte_rate, _align, bits = struct.unpack_from("<HHIIHH", body, 0)
            if codec != 1:
                raise WavParseError(f"unsupported codec: wFormatTag={codec}, only PCM (1) supported")
            if channels != 1:
                raise WavParseError(f"unsupported channel count: nChannels={channels}, mono required")
            if bits != 16:
                raise WavParseError(f"unsupported sample width: wBitsPerSample={bits}, 16 required")
            fmt = True
        elif cid == b"data":
            if fmt is None:
                raise WavParseError("data chunk precedes fmt chunk")
            if size % 2:
                raise WavParseError(f"data chunk size {size} is not a multiple of the sample width")
            pcm = np.frombuffer(body, dtype="<i2")
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavParseError("missing fmt chunk")
    if pcm is None:
        raise WavParseError("missing data chunk")
    return Waveform(pcm.astype(np.float64) / 32768.0, int(rate))


def write_wav(wf: Waveform) -> bytes:
    """Serialize a Waveform as a canonical 44-byte-header PCM16 mono file."""
    pcm = np.clip(np.rint(wf.samples * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    hdr = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        wf.sample_rate,
        wf.sample_rate * 2,
        2,
        16,
        b"data",
        len(data),
    )
    return hdr + data


# ---------------------------------------------------------------------------
# STFT / iSTFT

def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length n."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def _check_params(fft_len: int, win_len: int, hop: int) -> None:
    if hop <= 0:
        raise InvalidInputError(f"hop must be positive, got {hop}")
    if win_len > fft_len:
        raise InvalidInputError(f"win_len {win_len} exceeds fft_len {fft_len}")
    if hop > win_len:
        raise InvalidInputError(f"hop {hop} exceeds win_len {win_len}")


def stft(x: Waveform, fft_len: int = 510, win_len: int = 510, hop: int = 100,
         window: np.ndarray | None = None) -> ComplexSpec:
    """One-sided STFT with reflect center padding of win_len // 2 per side."""
    _check_params(fft_len, win_len, hop)
    s = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
    if s.size == 0:
        raise InvalidInputError("cannot transform an empty signal")
    if window is None:
        window = hann_window(win_len)
    pad = win_len // 2
    if pad >= s.size:
        raise InvalidInputError(
            f"signal of {s.size} samples too short for reflect padding of {pad}"
        )
    sp = np.pad(s, (pad, pad), mode="reflect")
    n_frames = (sp.size - win_len) // hop + 1
    if n_frames < 1:
        raise InvalidInputError("signal shorter than one analysis frame")
    frames = np.lib.stride_tricks.sliding_window_view(sp, win_len)[:: hop][:n_frames]
    spec = np.fft.rfft(frames * window, n=fft_len, axis=1)
    return ComplexSpec(spec.real, spec.imag, fft_len, win_len, hop, window)


def istft(spec: ComplexSpec, out_len: int) -> Waveform:
    """Weighted overlap-add inverse with window-square normalization."""
    w = spec.window
    frames = np.fft.irfft(spec.complex(), n=spec.fft_len, axis=1)[:, : spec.win_len]
    frames = frames * w
    t, win_len, hop = spec.frames, spec.win_len, spec.hop
    total = (t - 1) * hop + win_len
    num = np.zeros(total)
    den = np.zeros(total)
    w2 = w * w
    for m in range(t):
        num[m * hop : m * hop + win_len] += frames[m]
        den[m * hop : m * hop + win_len] += w2
    pad = win_len // 2
    keep = slice(pad, min(pad + out_len, total))
    if np.any(den[keep] < 1e-8):
        raise NonInvertibleWindowError(
            "overlap-add normalization below 1e-8; window/hop pair is not invertible"
        )
    y = np.zeros(out_len)
    seg = num[keep] / den[keep]
    y[: seg.size] = seg
    return Waveform(y)


def default_out_len(spec: ComplexSpec) -> int:
    """Signal length whose stft() has exactly this spectrogram's frame count."""
    return (spec.frames - 1) * spec.hop


# ---------------------------------------------------------------------------
# Polar decomposition

def decompose(spec: ComplexSpec) -> MagPhase:
    """Magnitude sqrt(re^2 + im^2) and phase atan2(im, re) in (-pi, pi]."""
    mag = np.hypot(spec.re, spec.im)
    phase = np.arctan2(spec.im, spec.re)
    phase = np.where(phase <= -np.pi, np.pi, phase)
    return MagPhase(mag, phase, spec.fft_len, spec.win_len, spec.hop, spec.window)


def recompose(mp: MagPhase) -> ComplexSpec:
    if mp.window is None:
        raise InvalidInputError("MagPhase carries no transform metadata; cannot recompose")
    return ComplexSpec(
        mp.mag * np.cos(mp.phase),
        mp.mag * np.sin(mp.phase),
        mp.fft_len,
        mp.win_len,
        mp.hop,
        mp.window,
    )


def compress_magnitude(mag: np.ndarray, power: float = 1.0) -> np.ndarray:
    """Optional power-law magnitude compression hook (1.0 = identity)."""
    if power == 1.0:
        return mag
    return np.power(mag, power)


def snr_db(ref: np.ndarray, est: np.ndarray) -> float:
    """Reconstruction SNR in dB of `est` against `ref`."""
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    err = np.sum((ref - est) ** 2)
    if err == 0:
        return np.inf
    return 10.0 * np.log10(np.sum(ref**2) / err)
