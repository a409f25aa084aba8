from __future__ import annotations

import io
import struct

import numpy as np
import pytest

from ssdkit.audio_io import (
    AudioClip,
    decode_wav_bytes,
    encode_wav_bytes,
    load_wav,
    rational_approx,
    resample,
    save_wav,
)
from ssdkit.errors import (
    AudioDecodeError,
    EmptyAudioError,
    ParameterError,
    UnsupportedFormatError,
)


def wav_bytes(body: bytes, *, tag=1, channels=1, rate=44100, bits=16) -> bytes:
    """Assemble a minimal RIFF/WAVE container around a raw data payload."""
    block = channels * bits // 8
    out = io.BytesIO()
    out.write(b"RIFF")
    out.write(struct.pack("<I", 4 + 8 + 16 + 8 + len(body)))
    out.write(b"WAVE")
    out.write(b"fmt ")
    out.write(struct.pack("<IHHIIHH", 16, tag, channels, rate,
                          rate * block, block, bits))
    out.write(b"data")
    out.write(struct.pack("<I", len(body)))
    out.write(body)
    return out.getvalue()


class TestDecode:
    def test_full_scale_division_16_bit(self):
        body = struct.pack("<3h", 0, 16384, -32768)
        clip = decode_wav_bytes(wav_bytes(body))
        assert clip.sample_rate_hz == 44100
        assert np.allclose(clip.samples, [0.0, 0.5, -1.0])

    def test_one_second_at_native_rate(self, make_tone, tmp_path):
        path = tmp_path / "one_second.wav"
        save_wav(make_tone(duration_s=1.0), path)
        assert load_wav(path).samples.size == 44100

    def test_stereo_averages_to_mono(self):
        left = np.array([32767, 32767, 32767], dtype="<i2")
        right = np.zeros(3, dtype="<i2")
        body = np.column_stack([left, right]).tobytes()
        clip = decode_wav_bytes(wav_bytes(body, channels=2))
        assert np.allclose(clip.samples, 32767 / 32768 / 2, atol=1e-9)

    def test_eight_bit_is_unsigned(self):
        body = bytes([128, 255, 0])  # midpoint, max, min
        clip = decode_wav_bytes(wav_bytes(body, bits=8))
        assert abs(clip.samples[0]) < 1 / 127
        assert clip.samples[1] > 0.97
        assert clip.samples[2] < -0.97

    def test_twenty_four_bit(self):
        val = 2 ** 23 - 1
        body = struct.pack("<i", val)[:3] + struct.pack("<i", -(2 ** 23))[:3]
        clip = decode_wav_bytes(wav_bytes(body, bits=24))
        assert clip.samples[0] == pytest.approx(val / 2 ** 23)
        assert clip.samples[1] == pytest.approx(-1.0)

    def test_float32_payload(self):
        body = np.array([0.25, -0.75], dtype="<f4").tobytes()
        clip = decode_wav_bytes(wav_bytes(body, tag=3, bits=32))
        assert np.allclose(clip.samples, [0.25, -0.75])

    def test_malformed_header(self):
        with pytest.raises(AudioDecodeError):
            decode_wav_bytes(b"not even close to a wav file")

    def test_unsupported_codec(self):
        body = struct.pack("<2h", 0, 0)
        with pytest.raises(UnsupportedFormatError):
            decode_wav_bytes(wav_bytes(body, tag=0x0055))  # MP3 tag

    def test_zero_length_data(self):
        with pytest.raises(EmptyAudioError):
            decode_wav_bytes(wav_bytes(b""))

    def test_truncated_data_chunk(self):
        good = wav_bytes(struct.pack("<4h", 1, 2, 3, 4))
        with pytest.raises(AudioDecodeError):
            decode_wav_bytes(good[:-3])

    def test_decoded_samples_always_in_range(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(1, 500))
            body = rng.integers(-32768, 32768, n).astype("<i2").tobytes()
            clip = decode_wav_bytes(wav_bytes(body))
            assert np.all(np.isfinite(clip.samples))
            assert np.max(np.abs(clip.samples)) <= 1.0


class TestEncode:
    def test_sine_round_trip_16_bit(self, make_tone, tmp_path):
        clip = make_tone(amplitude=0.5)
        path = tmp_path / "sine.wav"
        save_wav(clip, path, bit_depth=16)
        back = load_wav(path)
        assert back.sample_rate_hz == clip.sample_rate_hz
        assert np.max(np.abs(back.samples - clip.samples)) <= 2 ** -15

    def test_round_trip_32_bit_float(self, make_tone):
        clip = make_tone(amplitude=0.9)
        back = decode_wav_bytes(encode_wav_bytes(clip, bit_depth=32))
        assert np.max(np.abs(back.samples - clip.samples)) <= 2 ** -23

    def test_bit_depth_12_rejected(self, make_tone):
        with pytest.raises(ParameterError):
            encode_wav_bytes(make_tone(), bit_depth=12)

    def test_empty_clip_rejected(self):
        with pytest.raises(EmptyAudioError):
            AudioClip(np.array([]), 44100)

    def test_out_of_range_clip_rejected(self):
        with pytest.raises(ParameterError):
            AudioClip(np.array([0.0, 1.5]), 44100)

    def test_random_round_trips_bounded_by_one_step(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(8, 2000))
            x = rng.uniform(-1.0, 1.0, n)
            clip = AudioClip(x, 44100)
            back = decode_wav_bytes(encode_wav_bytes(clip, bit_depth=16))
            assert np.max(np.abs(back.samples - x)) <= 2 ** -15 + abs(x).max() / 32768


class TestResample:
    def test_identity_rate(self, make_tone):
        clip = make_tone()
        out = resample(clip, clip.sample_rate_hz)
        assert out.sample_rate_hz == clip.sample_rate_hz
        assert np.array_equal(out.samples, clip.samples)

    def test_length_ratio(self):
        clip = AudioClip(np.zeros(1000) + 0.1, 22050)
        out = resample(clip, 44100)
        assert abs(out.samples.size - 2000) <= 1
        assert out.sample_rate_hz == 44100

    def test_tone_peak_preserved_48k_to_44k1(self, fft_peak_hz):
        sr = 48000
        t = np.arange(sr) / sr
        clip = AudioClip(0.5 * np.sin(2 * np.pi * 440.0 * t), sr)
        out = resample(clip, 44100)
        bin_hz = 44100 / out.samples.size
        assert abs(fft_peak_hz(out) - 440.0) <= bin_hz

    def test_tone_peak_preserved_upsampling(self, fft_peak_hz):
        sr = 16000
        t = np.arange(sr) / sr
        clip = AudioClip(0.5 * np.sin(2 * np.pi * 1000.0 * t), sr)
        out = resample(clip, 44100)
        bin_hz = 44100 / out.samples.size
        assert abs(fft_peak_hz(out) - 1000.0) <= bin_hz

    def test_output_stays_in_range(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            x = rng.uniform(-1.0, 1.0, 4000)
            out = resample(AudioClip(x, 48000), 44100)
            assert np.all(np.isfinite(out.samples))
            assert np.max(np.abs(out.samples)) <= 1.0

    def test_rational_approx_exact_ratios(self):
        assert rational_approx(2.0) == (2, 1)
        assert rational_approx(44100 / 48000) == (147, 160)
        assert rational_approx(44100 / 22050) == (2, 1)
