"""Three-channel log-Mel spectrogram features.

Each channel is a log-Mel map computed at its own window/hop pair
({25,10}, {50,25}, {100,50} ms), interpolated to a common frame count
and stacked into a [128, T, 3] tensor, T = 256 for whole phrases and
128 for cut characters.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip
from .errors import ConfigurationError, ParameterError

FLOOR_DB = -80.0
N_MELS = 128

# (window_ms, hop_ms) per channel, coarse time resolution last
CHANNEL_TIMINGS = ((25.0, 10.0), (50.0, 25.0), (100.0, 50.0))

PHRASE_FRAMES = 256
CHARACTER_FRAMES = 128
PRESET_FRAMES = {"phrase": PHRASE_FRAMES, "character": CHARACTER_FRAMES}


@dataclass(frozen=True)
class ChannelConfig:
    window_ms: float
    hop_ms: float
    n_mels: int = N_MELS
    fft_size: int = 0  # 0: next power of two >= window samples
    fmin_hz: float = 0.0
    fmax_hz: float = 22050.0

    def window_samples(self, sample_rate_hz: int) -> int:
        return int(self.window_ms * sample_rate_hz / 1000.0 + 0.5)

    def hop_samples(self, sample_rate_hz: int) -> int:
        return max(1, int(self.hop_ms * sample_rate_hz / 1000.0 + 0.5))

    def resolved_fft_size(self, sample_rate_hz: int) -> int:
        if self.fft_size:
            return self.fft_size
        return 1 << int(np.ceil(np.log2(self.window_samples(sample_rate_hz))))


def preset_channel_configs() -> tuple[ChannelConfig, ChannelConfig, ChannelConfig]:
    return tuple(ChannelConfig(w, h) for w, h in CHANNEL_TIMINGS)


@dataclass
class FeatureMap:
    """[n_mels, target_frames, 3] float32 tensor of dB values in [floor_db, 0]."""

    values: np.ndarray
    sample_id: str = ""
    config_hash: str = ""
    floor_db: float = FLOOR_DB

    @property
    def shape(self):
        return self.values.shape


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def stft_magnitude(clip: AudioClip, window_ms: float, hop_ms: float, fft_size: int) -> np.ndarray:
    """Centered magnitude STFT: [fft_size/2 + 1, frames]."""
    sr = clip.sample_rate_hz
    win = int(window_ms * sr / 1000.0 + 0.5)
    hop = max(1, int(hop_ms * sr / 1000.0 + 0.5))
    if fft_size < win:
        raise ParameterError(f"fft_size {fft_size} < window of {win} samples")
    pad = (win + 1) // 2
    x = clip.samples
    if x.size <= pad:
        raise ParameterError(f"clip of {x.size} samples too short for a {win}-sample window")
    xp = np.pad(x, pad, mode="reflect")
    if xp.size < win:
        raise ParameterError("window does not fit in the padded clip")
    n_frames = 1 + (xp.size - win) // hop
    frames = np.lib.stride_tricks.sliding_window_view(xp, win)[::hop][:n_frames]
    window = np.hanning(win)
    spec = np.fft.rfft(frames * window, n=fft_size, axis=1)
    return np.abs(spec).T.astype(np.float64)


def mel_filterbank(n_mels: int, fft_size: int, sample_rate_hz: int,
                   fmin_hz: float = 0.0, fmax_hz: float = 22050.0) -> np.ndarray:
    """[n_mels, fft_size/2 + 1] matrix of peak-normalized triangles."""
    if not (0 <= fmin_hz < fmax_hz <= sample_rate_hz / 2):
        raise ParameterError("need 0 <= fmin < fmax <= Nyquist")
    if n_mels < 1:
        raise ParameterError("n_mels must be >= 1")
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_mels + 2))
    bin_hz = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    df = sample_rate_hz / fft_size
    if np.any(np.diff(np.round(edges_hz[1:-1] / df)) < 1):
        raise ConfigurationError(
            f"{n_mels} mel centers collapse on a {fft_size}-point grid")

    lower, center, upper = edges_hz[:-2], edges_hz[1:-1], edges_hz[2:]
    rise = (bin_hz[None, :] - lower[:, None]) / (center - lower)[:, None]
    fall = (upper[:, None] - bin_hz[None, :]) / (upper - center)[:, None]
    fb = np.maximum(0.0, np.minimum(rise, fall))
    peaks = fb.max(axis=1)
    if np.any(peaks <= 0.0):
        raise ConfigurationError("a filterbank row has no support on the FFT grid")
    return fb / peaks[:, None]


def log_mel_channel(clip: AudioClip, cfg: ChannelConfig, floor_db: float = FLOOR_DB) -> np.ndarray:
    """Power spectrogram through the filterbank, in dB re the map maximum."""
    sr = clip.sample_rate_hz
    fft_size = cfg.resolved_fft_size(sr)
    mag = stft_magnitude(clip, cfg.window_ms, cfg.hop_ms, fft_size)
    fb = _cached_filterbank(cfg.n_mels, fft_size, sr, cfg.fmin_hz, min(cfg.fmax_hz, sr / 2))
    mel_power = fb @ (mag * mag)
    ref = mel_power.max()
    if ref <= 0.0:
        return np.full(mel_power.shape, floor_db)
    db = 10.0 * np.log10(np.maximum(mel_power, 1e-30) / ref)
    return np.maximum(db, floor_db)


_fb_cache: dict = {}


def _cached_filterbank(n_mels, fft_size, sr, fmin, fmax):
    key = (n_mels, fft_size, sr, round(fmin, 6), round(fmax, 6))
    fb = _fb_cache.get(key)
    if fb is None:
        fb = mel_filterbank(n_mels, fft_size, sr, fmin, fmax)
        _fb_cache[key] = fb
    return fb


def _interp_time_axis(mat: np.ndarray, target_frames: int) -> np.ndarray:
    """Linear interpolation of [n_mels, F] along time to target_frames columns."""
    n_mels, f = mat.shape
    if f == target_frames:
        return mat
    if f == 1:
        return np.repeat(mat, target_frames, axis=1)
    pos = np.linspace(0.0, f - 1.0, target_frames)
    lo = np.floor(pos).astype(np.intp)
    lo = np.minimum(lo, f - 2)
    frac = pos - lo
    return mat[:, lo] * (1.0 - frac) + mat[:, lo + 1] * frac


def config_digest(configs, target_frames: int, floor_db: float = FLOOR_DB) -> str:
    text = repr((tuple(configs), target_frames, floor_db))
    return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


def stack_three_channels(clip: AudioClip, configs=None, target_frames: int = PHRASE_FRAMES,
                         sample_id: str = "") -> FeatureMap:
    if configs is None:
        configs = preset_channel_configs()
    configs = tuple(configs)
    if len(configs) != 3:
        raise ParameterError("exactly three channel configs required")
    if len({c.hop_ms for c in configs}) != 3:
        raise ParameterError("channel hop lengths must be distinct")
    if target_frames not in (PHRASE_FRAMES, CHARACTER_FRAMES):
        raise ParameterError(f"target_frames must be one of {PHRASE_FRAMES}/{CHARACTER_FRAMES}")
    chans = [_interp_time_axis(log_mel_channel(clip, c), target_frames) for c in configs]
    values = np.stack(chans, axis=-1).astype(np.float32)
    return FeatureMap(values, sample_id=sample_id,
                      config_hash=config_digest(configs, target_frames))


def extract_preset(clip: AudioClip, preset: str, sample_id: str = "") -> FeatureMap:
    """Feature map for a named preset: 'phrase' [128,256,3] or 'character' [128,128,3]."""
    if preset not in PRESET_FRAMES:
        raise ParameterError(f"unknown preset {preset!r}")
    return stack_three_channels(clip, preset_channel_configs(),
                                PRESET_FRAMES[preset], sample_id=sample_id)


# ---------------------------------------------------------------------------
# Binary container: magic "SSDF", version, dims, floor, row-major float32.

_SSDF_MAGIC = b"SSDF"
_SSDF_VERSION = 1
_SSDF_HEADER = "<4sHHHHf"


def feature_map_to_bytes(fm: FeatureMap) -> bytes:
    v = np.ascontiguousarray(fm.values, dtype="<f4")
    if v.ndim != 3:
        raise ParameterError("feature map must be [n_mels, frames, channels]")
    n_mels, frames, channels = v.shape
    header = struct.pack(_SSDF_HEADER, _SSDF_MAGIC, _SSDF_VERSION,
                         n_mels, frames, channels, fm.floor_db)
    return header + v.tobytes()


def feature_map_from_bytes(data: bytes) -> FeatureMap:
    head = struct.calcsize(_SSDF_HEADER)
    if len(data) < head:
        raise ParameterError("feature container shorter than its header")
    magic, version, n_mels, frames, channels, floor_db = struct.unpack_from(_SSDF_HEADER, data)
    if magic != _SSDF_MAGIC:
        raise ParameterError("bad feature container magic")
    if version != _SSDF_VERSION:
        raise ParameterError(f"unsupported feature container version {version}")
    count = n_mels * frames * channels
    body = np.frombuffer(data, dtype="<f4", count=count, offset=head)
    if body.size != count:
        raise ParameterError("feature container truncated")
    values = body.reshape(n_mels, frames, channels).copy()
    return FeatureMap(values, floor_db=floor_db)


def save_feature_map(fm: FeatureMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(feature_map_to_bytes(fm))


def load_feature_map(path) -> FeatureMap:
    with open(path, "rb") as fh:
        return feature_map_from_bytes(fh.read())


def export_npy(fm: FeatureMap, path) -> None:
    np.save(path, fm.values)
