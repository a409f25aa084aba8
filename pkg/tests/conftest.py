from __future__ import annotations

import numpy as np
import pytest

from ssdkit.audio_io import AudioClip


@pytest.fixture
def make_tone():
    """Pure-sine clip factory used by the FFT-peak oracles."""

    def _make(freq_hz: float = 440.0, duration_s: float = 1.0,
              sample_rate_hz: int = 44100, amplitude: float = 0.5) -> AudioClip:
        t = np.arange(int(round(duration_s * sample_rate_hz))) / sample_rate_hz
        return AudioClip(amplitude * np.sin(2.0 * np.pi * freq_hz * t), sample_rate_hz)

    return _make


@pytest.fixture
def fft_peak_hz():
    """Dominant-frequency oracle: location of the FFT magnitude peak."""

    def _peak(clip: AudioClip) -> float:
        spec = np.abs(np.fft.rfft(clip.samples * np.hanning(clip.samples.size)))
        freqs = np.fft.rfftfreq(clip.samples.size, 1.0 / clip.sample_rate_hz)
        return float(freqs[int(np.argmax(spec))])

    return _peak
