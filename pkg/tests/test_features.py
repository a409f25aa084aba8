from __future__ import annotations

import numpy as np
import pytest

from ssdkit.audio_io import AudioClip
from ssdkit.errors import ConfigurationError, ParameterError
from ssdkit.features import (
    CHANNEL_TIMINGS,
    CHARACTER_FRAMES,
    FLOOR_DB,
    PHRASE_FRAMES,
    ChannelConfig,
    FeatureMap,
    config_digest,
    export_npy,
    extract_preset,
    feature_map_from_bytes,
    feature_map_to_bytes,
    hz_to_mel,
    load_feature_map,
    log_mel_channel,
    mel_filterbank,
    mel_to_hz,
    save_feature_map,
    stack_three_channels,
    stft_magnitude,
)


class TestMelScale:
    def test_mel_of_1000_hz(self):
        assert hz_to_mel(1000.0) == pytest.approx(2595.0 * np.log10(1 + 1000 / 700), abs=1e-9)
        assert abs(hz_to_mel(1000.0) - 999.99) < 0.01

    def test_mel_of_zero(self):
        assert hz_to_mel(0.0) == 0.0

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        f = rng.uniform(1.0, 22050.0, 200)
        assert np.max(np.abs(mel_to_hz(hz_to_mel(f)) - f) / f) < 1e-9


class TestFilterbank:
    def test_rows_are_unit_peak_triangles(self):
        fb = mel_filterbank(128, 2048, 44100)
        assert fb.shape == (128, 1025)
        assert np.all(fb >= 0.0)
        assert np.allclose(fb.max(axis=1), 1.0)
        assert np.allclose(fb.min(axis=1), 0.0)
        for row in fb:
            peak = int(np.argmax(row))
            # unimodal: nondecreasing up to the peak, nonincreasing after
            assert np.all(np.diff(row[:peak + 1]) >= -1e-12)
            assert np.all(np.diff(row[peak:]) <= 1e-12)

    def test_centers_strictly_increasing(self):
        fb = mel_filterbank(64, 4096, 44100)
        centers = fb.argmax(axis=1)
        assert np.all(np.diff(centers) > 0)

    def test_too_dense_for_grid(self):
        with pytest.raises(ConfigurationError):
            mel_filterbank(128, 256, 44100)

    def test_bad_band_edges(self):
        with pytest.raises(ParameterError):
            mel_filterbank(40, 2048, 44100, fmin_hz=500.0, fmax_hz=100.0)


class TestStft:
    def test_zero_signal_all_zero(self):
        clip = AudioClip(np.zeros(22050) + 1e-12, 44100)
        mag = stft_magnitude(clip, 25.0, 10.0, 2048)
        assert np.allclose(mag, 0.0, atol=1e-9)

    def test_one_second_frame_count(self, make_tone):
        mag = stft_magnitude(make_tone(duration_s=1.0), 25.0, 10.0, 2048)
        assert mag.shape[1] == 101

    def test_tone_peak_bin(self, make_tone):
        fft_size = 4096
        mag = stft_magnitude(make_tone(1000.0), 50.0, 25.0, fft_size)
        expected_bin = round(1000 * fft_size / 44100)
        interior = mag[:, 2:-2]
        assert np.all(interior.argmax(axis=0) == expected_bin)

    def test_fft_smaller_than_window(self, make_tone):
        with pytest.raises(ParameterError):
            stft_magnitude(make_tone(), 50.0, 25.0, 1024)


class TestLogMelChannel:
    def test_silence_is_uniform_floor(self):
        clip = AudioClip(np.zeros(11025), 44100)
        out = log_mel_channel(clip, ChannelConfig(25.0, 10.0))
        assert np.all(out == FLOOR_DB)

    def test_max_is_zero_db(self, make_tone):
        out = log_mel_channel(make_tone(), ChannelConfig(25.0, 10.0))
        assert out.max() == 0.0
        assert out.min() >= FLOOR_DB

    def test_tone_lands_in_its_mel_bin(self, make_tone):
        cfg = ChannelConfig(50.0, 25.0)
        fft_size = cfg.resolved_fft_size(44100)
        fb = mel_filterbank(cfg.n_mels, fft_size, 44100, cfg.fmin_hz, cfg.fmax_hz)
        tone_bin = round(440 * fft_size / 44100)
        expected_mel = int(np.argmax(fb[:, tone_bin]))
        out = log_mel_channel(make_tone(440.0), cfg)
        interior = out[:, 2:-2]
        hits = np.mean(interior.argmax(axis=0) == expected_mel)
        assert hits > 0.9


class TestStacking:
    def test_phrase_preset_shape(self, make_tone):
        fm = extract_preset(make_tone(duration_s=0.8), "phrase")
        assert fm.shape == (128, PHRASE_FRAMES, 3)
        assert fm.values.dtype == np.float32

    def test_character_preset_shape(self, make_tone):
        fm = extract_preset(make_tone(duration_s=0.4), "character")
        assert fm.shape == (128, CHARACTER_FRAMES, 3)

    def test_unknown_preset(self, make_tone):
        with pytest.raises(ParameterError):
            extract_preset(make_tone(), "word")

    def test_silence_has_no_nan(self):
        clip = AudioClip(np.zeros(22050), 44100)
        fm = extract_preset(clip, "character")
        assert np.all(np.isfinite(fm.values))
        assert np.all(fm.values == FLOOR_DB)

    def test_values_bounded(self, make_tone):
        rng = np.random.default_rng(13)
        for _ in range(4):
            x = rng.uniform(-0.8, 0.8, int(rng.integers(8000, 60000)))
            fm = extract_preset(AudioClip(x, 44100), "character")
            assert np.all(fm.values >= FLOOR_DB)
            assert np.all(fm.values <= 0.0)
            assert np.all(np.isfinite(fm.values))

    def test_deterministic(self, make_tone):
        clip = make_tone()
        a = extract_preset(clip, "phrase")
        b = extract_preset(clip, "phrase")
        assert np.array_equal(a.values, b.values)

    def test_channel_order_follows_timings(self, make_tone):
        # the slowest hop (channel 2) smears the tone over fewer distinct
        # frames before interpolation; verify channels are not identical
        fm = stack_three_channels(make_tone(duration_s=0.5), target_frames=128)
        assert not np.array_equal(fm.values[:, :, 0], fm.values[:, :, 2])
        assert len(CHANNEL_TIMINGS) == 3

    def test_config_digest_distinguishes(self):
        from ssdkit.features import preset_channel_configs
        configs = preset_channel_configs()
        assert config_digest(configs, 256) == config_digest(configs, 256)
        assert config_digest(configs, 256) != config_digest(configs, 128)


class TestSerialization:
    def test_bytes_round_trip(self, make_tone):
        fm = extract_preset(make_tone(duration_s=0.3), "character", sample_id="s1")
        back = feature_map_from_bytes(feature_map_to_bytes(fm))
        assert np.array_equal(back.values, fm.values)
        assert back.floor_db == fm.floor_db

    def test_file_round_trip(self, make_tone, tmp_path):
        fm = extract_preset(make_tone(duration_s=0.3), "character")
        path = tmp_path / "map.ssdf"
        save_feature_map(fm, path)
        assert np.array_equal(load_feature_map(path).values, fm.values)

    def test_bad_magic_rejected(self):
        with pytest.raises(ParameterError):
            feature_map_from_bytes(b"XXXX" + b"\x00" * 64)

    def test_npy_export(self, make_tone, tmp_path):
        fm = extract_preset(make_tone(duration_s=0.3), "character")
        path = tmp_path / "map.npy"
        export_npy(fm, path)
        assert np.array_equal(np.load(path), fm.values)
