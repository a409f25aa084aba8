"""PCM audio decode/encode/resample.

The boundary between files (or uploaded bytes) and in-memory signals.
Everything downstream works on AudioClip: mono float samples in
[-1, 1] plus a sample rate.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    AudioDecodeError,
    EmptyAudioError,
    ParameterError,
    UnsupportedFormatError,
)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class AudioClip:
    """Mono signal, samples in [-1, 1], with its sample rate in Hz."""

    samples: np.ndarray
    sample_rate_hz: int
    source_bit_depth: int = 16

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise EmptyAudioError("clip must hold a non-empty 1-D signal")
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("clip contains non-finite samples")
        peak = float(np.max(np.abs(self.samples)))
        if peak > 1.0 + 1e-9:
            raise ParameterError(f"samples exceed [-1, 1] (peak {peak:.6g})")
        if int(self.sample_rate_hz) <= 0:
            raise ParameterError("sample_rate_hz must be positive")
        self.sample_rate_hz = int(self.sample_rate_hz)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


def _parse_riff_chunks(data: bytes):
    """Yield (chunk id, payload) pairs of a RIFF/WAVE byte string."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioDecodeError("not a RIFF/WAVE file")
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 8][:4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise AudioDecodeError(f"truncated '{cid.decode(errors='replace')}' chunk")
        yield cid, body
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def decode_wav_bytes(data: bytes) -> AudioClip:
    """Decode an in-memory RIFF/WAVE PCM byte string to a mono clip."""
    fmt = None
    payload = None
    for cid, body in _parse_riff_chunks(data):
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            payload = body
        if fmt is not None and payload is not None:
            break
    if fmt is None or len(fmt) < 16:
        raise AudioDecodeError("missing or short fmt chunk")
    if payload is None:
        raise AudioDecodeError("missing data chunk")

    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise AudioDecodeError("extensible fmt chunk too short")
        (tag,) = struct.unpack_from("<H", fmt, 24)  # first 2 bytes of SubFormat GUID
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"{channels} channels (mono/stereo only)")
    if rate <= 0:
        raise AudioDecodeError("non-positive sample rate")

    if tag == WAVE_FORMAT_PCM and bits == 8:
        raw = np.frombuffer(payload, dtype=np.uint8)
        x = (raw.astype(np.float64) - 128.0) / 128.0
    elif tag == WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(payload[:len(payload) - len(payload) % 2], dtype="<i2")
        x = raw.astype(np.float64) / 32768.0
    elif tag == WAVE_FORMAT_PCM and bits == 24:
        usable = len(payload) - len(payload) % 3
        b = np.frombuffer(payload[:usable], dtype=np.uint8).reshape(-1, 3)
        raw = (
            b[:, 0].astype(np.int32)
            | (b[:, 1].astype(np.int32) << 8)
            | (b[:, 2].astype(np.int32) << 16)
        )
        raw = np.where(raw >= 1 << 23, raw - (1 << 24), raw)
        x = raw.astype(np.float64) / float(1 << 23)
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload[:len(payload) - len(payload) % 4], dtype="<f4")
        x = np.clip(raw.astype(np.float64), -1.0, 1.0)
    else:
        raise UnsupportedFormatError(f"format tag {tag}, {bits}-bit")

    if x.size == 0:
        raise EmptyAudioError("data chunk holds no samples")
    if channels == 2:
        x = x[:x.size - x.size % 2].reshape(-1, 2).mean(axis=1)
        if x.size == 0:
            raise EmptyAudioError("data chunk holds no complete frames")
    return AudioClip(x, rate, source_bit_depth=bits)


def load_wav(path) -> AudioClip:
    with open(path, "rb") as fh:
        return decode_wav_bytes(fh.read())


def encode_wav_bytes(clip: AudioClip, bit_depth: int = 16) -> bytes:
    if bit_depth not in (16, 32):
        raise ParameterError("bit_depth must be 16 or 32")
    x = clip.samples
    if bit_depth == 16:
        tag, block = WAVE_FORMAT_PCM, 2
        body = np.round(np.clip(x, -1.0, 1.0) * 32767.0).astype("<i2").tobytes()
    else:
        tag, block = WAVE_FORMAT_IEEE_FLOAT, 4
        body = x.astype("<f4").tobytes()
    rate = clip.sample_rate_hz
    out = io.BytesIO()
    out.write(b"RIFF")
    out.write(struct.pack("<I", 4 + 8 + 16 + 8 + len(body)))
    out.write(b"WAVE")
    out.write(b"fmt ")
    out.write(struct.pack("<IHHIIHH", 16, tag, 1, rate, rate * block, block, bit_depth))
    out.write(b"data")
    out.write(struct.pack("<I", len(body)))
    out.write(body)
    return out.getvalue()


def save_wav(clip: AudioClip, path, bit_depth: int = 16) -> None:
    data = encode_wav_bytes(clip, bit_depth)
    with open(path, "wb") as fh:
        fh.write(data)


# ---------------------------------------------------------------------------
# Resampling: polyphase windowed sinc, Kaiser beta 8.6, 32 taps per phase.

_KAISER_BETA = 8.6
_TAPS_PER_PHASE = 32
_filter_cache: dict = {}


def _polyphase_filter(up: int, down: int) -> np.ndarray:
    key = (up, down)
    h = _filter_cache.get(key)
    if h is None:
        n = _TAPS_PER_PHASE * up + 1  # odd length, integer center 16*up
        center = (n - 1) // 2
        cutoff = min(1.0 / up, 1.0 / down)  # in units of the upsampled Nyquist
        k = np.arange(n) - center
        h = cutoff * np.sinc(cutoff * k) * np.kaiser(n, _KAISER_BETA) * up
        _filter_cache[key] = h
    return h


def _resample_rational(x: np.ndarray, up: int, down: int, out_len: int | None = None) -> np.ndarray:
    """Rate conversion by the exact rational factor up/down."""
    if up == down:
        return x.copy() if out_len is None else _fit_length(x, out_len)
    h = _polyphase_filter(up, down)
    center = (h.size - 1) // 2  # = 16*up
    if out_len is None:
        out_len = int(round(x.size * up / down))
    half = _TAPS_PER_PHASE // 2
    xp = np.concatenate([np.zeros(half), x, np.zeros(half + 2)])

    m = np.arange(out_len)
    t = m * down  # position on the upsampled grid
    i0 = -(-t // up) - half  # ceil(t/up) - 16: first contributing input index
    taps = np.arange(_TAPS_PER_PHASE)
    idx = i0[:, None] + taps[None, :]
    coeff = h[(t + center)[:, None] - idx * up]
    y = np.einsum("mk,mk->m", coeff, xp[idx + half])
    return y


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    if x.size >= n:
        return x[:n].copy()
    return np.concatenate([x, np.zeros(n - x.size)])


def rational_approx(ratio: float, max_den: int = 512) -> tuple[int, int]:
    f = Fraction(ratio).limit_denominator(max_den)
    return f.numerator, f.denominator


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Band-limited rate conversion; identity when rates already agree."""
    if int(target_rate_hz) <= 0:
        raise ParameterError("target_rate_hz must be positive")
    target_rate_hz = int(target_rate_hz)
    if target_rate_hz == clip.sample_rate_hz:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz, clip.source_bit_depth)
    g = np.gcd(target_rate_hz, clip.sample_rate_hz)
    up, down = target_rate_hz // g, clip.sample_rate_hz // g
    y = _resample_rational(clip.samples, up, down)
    y = np.clip(y, -1.0, 1.0)
    return AudioClip(y, target_rate_hz, clip.source_bit_depth)
