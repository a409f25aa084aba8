"""Waveform augmentations and the deterministic 9x expansion.

Six transforms: pitch shift (phase vocoder + resample), circular time
shift, speed scaling (plain resampling, pitch follows), dynamic range
compression, gain, and additive white Gaussian noise at a target SNR.
An expansion turns one clip into nine: the original plus eight variants
drawn from a PRNG keyed by (sample_id, master_seed), so the result never
depends on evaluation order or worker count.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioClip, _resample_rational, rational_approx
from .errors import DegenerateInputError, ParameterError

AUGMENT_KINDS = (
    "PitchShift",
    "TimeShift",
    "SpeedScale",
    "DynamicRangeCompress",
    "Gain",
    "AddNoise",
)

DRC_DEFAULTS = {"threshold_db": -20.0, "ratio": 4.0, "attack_ms": 5.0, "release_ms": 50.0}

_PV_NFFT = 2048
_PV_HOP = 512


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str
    params: tuple  # ((name, value), ...) so instances stay hashable
    seed: int = 0

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise ParameterError(f"unknown augmentation kind {self.kind!r}")

    def param_dict(self) -> dict:
        return dict(self.params)


@dataclass(frozen=True)
class ExpansionPlan:
    """Eight variant specs; original + variants = nine clips."""

    variants: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.variants) != 8:
            raise ParameterError("an expansion plan holds exactly 8 variants")


# ---------------------------------------------------------------------------
# Phase vocoder machinery for pitch shifting.

def _stft_complex(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    pad = n_fft // 2
    if x.size <= pad:
        xp = np.concatenate([np.zeros(pad), x, np.zeros(pad + n_fft)])
    else:
        xp = np.pad(x, pad, mode="reflect")
    n_frames = 1 + (xp.size - n_fft) // hop
    frames = np.lib.stride_tricks.sliding_window_view(xp, n_fft)[::hop][:n_frames]
    return np.fft.rfft(frames * np.hanning(n_fft), axis=1).T


def _istft(spec: np.ndarray, n_fft: int, hop: int, length: int) -> np.ndarray:
    window = np.hanning(n_fft)
    frames = np.fft.irfft(spec.T, n=n_fft, axis=1) * window
    n_frames = frames.shape[0]
    total = (n_frames - 1) * hop + n_fft
    y = np.zeros(total)
    norm = np.zeros(total)
    w2 = window * window
    for j in range(n_frames):
        y[j * hop:j * hop + n_fft] += frames[j]
        norm[j * hop:j * hop + n_fft] += w2
    good = norm > 1e-10
    y[good] /= norm[good]
    pad = n_fft // 2
    y = y[pad:pad + length]
    if y.size < length:
        y = np.concatenate([y, np.zeros(length - y.size)])
    return y


def _time_stretch(x: np.ndarray, rate: float, n_fft: int = _PV_NFFT, hop: int = _PV_HOP) -> np.ndarray:
    """Phase-vocoder stretch: duration scales by 1/rate, pitch unchanged."""
    spec = _stft_complex(x, n_fft, hop)
    n_bins, n_frames = spec.shape
    steps = np.arange(0.0, n_frames, rate)
    lo = np.minimum(steps.astype(np.intp), n_frames - 1)
    hi = np.minimum(lo + 1, n_frames - 1)
    alpha = steps - np.floor(steps)

    mag = np.abs(spec)
    phase = np.angle(spec)
    out_mag = mag[:, lo] * (1.0 - alpha) + mag[:, hi] * alpha

    phase_adv = (2.0 * np.pi * hop / n_fft) * np.arange(n_bins)
    dphase = phase[:, hi] - phase[:, lo] - phase_adv[:, None]
    dphase -= 2.0 * np.pi * np.round(dphase / (2.0 * np.pi))
    increments = phase_adv[:, None] + dphase
    acc = np.zeros_like(increments)
    np.cumsum(increments[:, :-1], axis=1, out=acc[:, 1:])
    acc += phase[:, [0]]

    out_len = int(round(x.size / rate))
    return _istft(out_mag * np.exp(1j * acc), n_fft, hop, out_len)


def pitch_shift(clip: AudioClip, semitones: float) -> AudioClip:
    """Shift pitch, keep duration: stretch in time, then resample back."""
    if abs(semitones) > 12:
        raise ParameterError("pitch shift limited to +-12 semitones")
    if semitones == 0:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz, clip.source_bit_depth)
    factor = 2.0 ** (semitones / 12.0)
    p, q = rational_approx(factor, 256)
    if p == q:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz, clip.source_bit_depth)
    stretched = _time_stretch(clip.samples, rate=q / p)
    y = _resample_rational(stretched, up=q, down=p, out_len=clip.samples.size)
    return AudioClip(np.clip(y, -1.0, 1.0), clip.sample_rate_hz, clip.source_bit_depth)


def time_shift(clip: AudioClip, fraction: float) -> AudioClip:
    if not -1.0 < fraction < 1.0:
        raise ParameterError("shift fraction must lie in (-1, 1)")
    shift = int(round(fraction * clip.samples.size))
    return AudioClip(np.roll(clip.samples, shift), clip.sample_rate_hz, clip.source_bit_depth)


def speed_scale(clip: AudioClip, factor: float) -> AudioClip:
    """Playback-speed change: length /= factor, pitch *= factor."""
    if not 0.5 <= factor <= 2.0:
        raise ParameterError("speed factor must lie in [0.5, 2.0]")
    if factor == 1.0:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz, clip.source_bit_depth)
    p, q = rational_approx(factor, 512)
    y = _resample_rational(clip.samples, up=q, down=p)
    return AudioClip(np.clip(y, -1.0, 1.0), clip.sample_rate_hz, clip.source_bit_depth)


def dynamic_range_compress(clip: AudioClip, threshold_db: float = -20.0, ratio: float = 4.0,
                           attack_ms: float = 5.0, release_ms: float = 50.0) -> AudioClip:
    """Feed-forward compressor with an RMS envelope detector.

    Gain above threshold is reduced toward threshold + excess/ratio;
    below threshold the signal passes at unity. Never boosts.
    """
    if ratio < 1.0:
        raise ParameterError("compression ratio must be >= 1")
    if threshold_db > 0.0:
        raise ParameterError("threshold_db must be <= 0")
    x = clip.samples
    if ratio == 1.0:
        return AudioClip(x.copy(), clip.sample_rate_hz, clip.source_bit_depth)
    sr = clip.sample_rate_hz

    # symmetric RMS detector (fixed 10 ms) so a steady tone reads its true
    # RMS level; attack/release ballistics act on the gain reduction
    a_rms = math.exp(-1.0 / (0.010 * sr))
    env2 = np.empty(x.size)
    e = 0.0
    for i, v in enumerate((x * x).tolist()):
        e = a_rms * e + (1.0 - a_rms) * v
        env2[i] = e
    env_db = 10.0 * np.log10(env2 + 1e-20)
    static_db = np.minimum(0.0, threshold_db + (env_db - threshold_db) / ratio - env_db)

    a_att = math.exp(-1.0 / (max(attack_ms, 1e-3) * 1e-3 * sr))
    a_rel = math.exp(-1.0 / (max(release_ms, 1e-3) * 1e-3 * sr))
    gain_db = np.empty(x.size)
    g = 0.0
    for i, target in enumerate(static_db.tolist()):
        a = a_att if target < g else a_rel  # deeper reduction engages fast
        g = a * g + (1.0 - a) * target
        gain_db[i] = g
    y = x * 10.0 ** (gain_db / 20.0)
    return AudioClip(y, clip.sample_rate_hz, clip.source_bit_depth)


def apply_gain(clip: AudioClip, gain_db: float) -> AudioClip:
    if abs(gain_db) > 24.0:
        raise ParameterError("gain limited to +-24 dB")
    y = np.clip(clip.samples * 10.0 ** (gain_db / 20.0), -1.0, 1.0)
    return AudioClip(y, clip.sample_rate_hz, clip.source_bit_depth)


def add_noise_snr(clip: AudioClip, snr_db: float, seed: int) -> AudioClip:
    if snr_db < 0.0:
        raise ParameterError("snr_db must be >= 0")
    x = clip.samples
    p_signal = float(np.mean(x * x))
    if p_signal <= 0.0:
        raise DegenerateInputError("cannot set an SNR against a zero-power clip")
    noise = np.random.default_rng(seed).standard_normal(x.size)
    rms_n = float(np.sqrt(np.mean(noise * noise)))
    target_rms = math.sqrt(p_signal / 10.0 ** (snr_db / 10.0))
    y = np.clip(x + noise * (target_rms / rms_n), -1.0, 1.0)
    return AudioClip(y, clip.sample_rate_hz, clip.source_bit_depth)


# ---------------------------------------------------------------------------
# Deterministic nine-fold expansion.

def _derive_seed(sample_id: str, master_seed: int) -> int:
    digest = hashlib.blake2b(f"{sample_id}|{master_seed}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def expansion_plan(sample_id: str, master_seed: int) -> ExpansionPlan:
    """The eight variant specs for one sample, keyed by (sample_id, master_seed)."""
    rng = np.random.default_rng(_derive_seed(sample_id, master_seed))
    speed = float(rng.uniform(0.75, 1.25))
    gain = float(rng.uniform(-3.0, 3.0))
    snr = float(rng.uniform(0.0, 10.0))
    noise_seed = int(rng.integers(0, 2 ** 63))
    return ExpansionPlan(variants=(
        AugmentationSpec("PitchShift", (("semitones", 2.0),)),
        AugmentationSpec("PitchShift", (("semitones", -2.0),)),
        AugmentationSpec("TimeShift", (("fraction", 0.10),)),
        AugmentationSpec("TimeShift", (("fraction", -0.10),)),
        AugmentationSpec("SpeedScale", (("factor", speed),)),
        AugmentationSpec("DynamicRangeCompress", tuple(DRC_DEFAULTS.items())),
        AugmentationSpec("Gain", (("db", gain),)),
        AugmentationSpec("AddNoise", (("snr_db", snr),), seed=noise_seed),
    ))


def apply_augmentation(clip: AudioClip, spec: AugmentationSpec) -> AudioClip:
    params = spec.param_dict()
    if spec.kind == "PitchShift":
        return pitch_shift(clip, params["semitones"])
    if spec.kind == "TimeShift":
        return time_shift(clip, params["fraction"])
    if spec.kind == "SpeedScale":
        return speed_scale(clip, params["factor"])
    if spec.kind == "DynamicRangeCompress":
        return dynamic_range_compress(clip, **params)
    if spec.kind == "Gain":
        return apply_gain(clip, params["db"])
    if spec.kind == "AddNoise":
        return add_noise_snr(clip, params["snr_db"], spec.seed)
    raise ParameterError(f"unknown augmentation kind {spec.kind!r}")


def expand_nine_fold(clip: AudioClip, sample_id: str, master_seed: int) -> list:
    """Original plus eight augmented variants, deterministic per key."""
    plan = expansion_plan(sample_id, master_seed)
    out = [AudioClip(clip.samples.copy(), clip.sample_rate_hz, clip.source_bit_depth)]
    out.extend(apply_augmentation(clip, spec) for spec in plan.variants)
    return out
