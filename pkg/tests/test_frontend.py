from __future__ import annotations

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from scipy.io import wavfile
from scipy.signal import get_window

from config import FrontendConfig
from frontend.dataset import FeatureBank, build_splits, clip_patches
from frontend.features import (
    LOG_FLOOR,
    MelSpec,
    Normalizer,
    fix_length,
    log_mel,
    mel_filterbank,
    mel_project,
    num_frames,
    stft,
)
from frontend.manifest import load_manifest, write_manifest
from frontend.patches import extract_patches, patch_embed
from frontend.wav import AudioClip, load_wav, resample_linear, write_wav
from utils.errors import ConfigError, DataError, InputTooShortError, ShapeError, UnsupportedFormatError


@pytest.fixture
def fe_cfg(tiny_cfg) -> FrontendConfig:
    return tiny_cfg.frontend


# ---------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------


def test_pcm16_square_wave_scales_to_unit_range(tmp_path):
    square = np.tile(np.array([32767, -32767], dtype=np.int16), 50)
    wavfile.write(str(tmp_path / "sq.wav"), 16000, square)
    clip = load_wav(tmp_path / "sq.wav")
    assert clip.sample_rate == 16000
    np.testing.assert_array_equal(clip.samples, np.tile([32767 / 32768, -32767 / 32768], 50))


def test_stereo_opposite_channels_mix_to_silence(tmp_path):
    x = (np.arange(200) * 97 % 20000 - 10000).astype(np.int16)
    wavfile.write(str(tmp_path / "st.wav"), 8000, np.stack([x, -x], axis=1))
    clip = load_wav(tmp_path / "st.wav")
    assert clip.samples.shape == (200,)
    np.testing.assert_array_equal(clip.samples, np.zeros(200))


def test_one_second_clip_length(tmp_path):
    write_wav(tmp_path / "s.wav", np.zeros(16000), 16000)
    clip = load_wav(tmp_path / "s.wav")
    assert clip.samples.shape == (16000,)
    assert clip.duration == pytest.approx(1.0)


def test_float32_passes_through(tmp_path, rng):
    x = rng.uniform(-1, 1, 300).astype(np.float32)
    write_wav(tmp_path / "f.wav", x, 8000, fmt="float32")
    np.testing.assert_array_equal(load_wav(tmp_path / "f.wav").samples, x.astype(np.float64))


def test_unsupported_codec_names_the_tag(tmp_path):
    wavfile.write(str(tmp_path / "i32.wav"), 8000, np.zeros(64, dtype=np.int32))
    with pytest.raises(UnsupportedFormatError, match="format tag 0x"):
        load_wav(tmp_path / "i32.wav")
    (tmp_path / "junk.wav").write_bytes(b"not a wave file at all")
    with pytest.raises(UnsupportedFormatError, match="no RIFF/WAVE header"):
        load_wav(tmp_path / "junk.wav")


def test_missing_wav_is_an_io_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_wav(tmp_path / "absent.wav")


def test_resample_linear(rng):
    clip = AudioClip(rng.standard_normal(1600), 16000)
    assert resample_linear(clip, 16000) is clip
    down = resample_linear(clip, 8000)
    assert down.sample_rate == 8000 and down.samples.shape == (800,)
    np.testing.assert_array_equal(down.samples, clip.samples[::2])


# ---------------------------------------------------------------------
# STFT and mel
# ---------------------------------------------------------------------


def test_stft_frame_count(fe_cfg):
    clip = AudioClip(np.zeros(2400), 8000)
    frames = stft(clip, fe_cfg)
    assert frames.shape == (num_frames(2400, fe_cfg), fe_cfg.n_fft // 2 + 1)
    assert frames.shape[0] == 31
    np.testing.assert_array_equal(frames, np.zeros_like(frames))


def test_sine_at_bin_center_concentrates_energy(fe_cfg):
    cfg = replace(fe_cfg, window_len=256)
    k = 20
    t = np.arange(4000)
    clip = AudioClip(np.sin(2 * np.pi * k * t / cfg.n_fft), cfg.sample_rate)
    power = np.abs(stft(clip, cfg)) ** 2
    mid = power[power.shape[0] // 2]
    assert int(np.argmax(mid)) == k
    assert mid[k - 1:k + 2].sum() >= 0.9 * mid.sum()


def test_stft_parseval(fe_cfg, rng):
    x = rng.standard_normal(fe_cfg.window_len * 4)
    frames = stft(AudioClip(x, fe_cfg.sample_rate), fe_cfg)
    # frame 3 starts at sample 3*hop of the reflect-padded signal
    pad = fe_cfg.window_len // 2
    padded = np.pad(x, pad, mode="reflect")
    seg = padded[3 * fe_cfg.hop_len:3 * fe_cfg.hop_len + fe_cfg.window_len]
    time_energy = float(np.sum((seg * get_window("hann", fe_cfg.window_len, fftbins=True)) ** 2))
    X = frames[3]
    n = fe_cfg.n_fft
    spec_energy = (abs(X[0]) ** 2 + 2 * np.sum(np.abs(X[1:-1]) ** 2) + abs(X[-1]) ** 2) / n
    assert spec_energy == pytest.approx(time_energy, rel=1e-6)


def test_clip_shorter_than_a_window(fe_cfg):
    with pytest.raises(InputTooShortError):
        stft(AudioClip(np.zeros(50), 8000), fe_cfg)


def test_filterbank_rows_are_non_empty_triangles(fe_cfg, desk_cfg):
    for cfg in (fe_cfg, desk_cfg.frontend):
        fb = mel_filterbank(cfg)
        assert fb.shape == (cfg.mel_bins, cfg.n_fft // 2 + 1)
        assert np.all(fb.sum(axis=1) > 0)
        assert np.all(fb <= 1.0) and np.all(fb >= 0.0)


def test_filterbank_with_empty_filters_is_rejected(fe_cfg):
    cfg = replace(fe_cfg, window_len=64, hop_len=32, n_fft=64)
    with pytest.raises(ConfigError, match="cover no FFT bin"):
        mel_filterbank(cfg)


def test_invalid_frequency_range_is_a_config_error(fe_cfg):
    with pytest.raises(ConfigError):
        replace(fe_cfg, fmax=6000.0)
    with pytest.raises(ConfigError):
        replace(fe_cfg, fmin=4000.0)


def test_silence_maps_to_log_floor(fe_cfg):
    mel = log_mel(AudioClip(np.zeros(2400), 8000), fe_cfg)
    np.testing.assert_array_equal(mel.values, np.full_like(mel.values, np.log(LOG_FLOOR)))


def test_white_noise_mel_matches_direct_summation(fe_cfg, rng):
    frames = stft(AudioClip(rng.standard_normal(2400), 8000), fe_cfg)
    mel = mel_project(frames, fe_cfg)
    fb = mel_filterbank(fe_cfg)
    power = np.abs(frames) ** 2
    expected = np.empty((power.shape[0], fe_cfg.mel_bins))
    for t in range(power.shape[0]):
        for m in range(fe_cfg.mel_bins):
            expected[t, m] = np.log(sum(fb[m, k] * power[t, k] for k in range(power.shape[1])) + LOG_FLOOR)
    np.testing.assert_allclose(mel.values, expected, rtol=1e-10, atol=1e-10)


# ---------------------------------------------------------------------
# Normalisation, fix_length and patches
# ---------------------------------------------------------------------


def test_normalizer_standardizes_and_refuses_second_pass(rng):
    mels = [MelSpec(rng.standard_normal((10, 4)) * 3.0 + 1.0) for _ in range(3)]
    norm = Normalizer.fit(mels)
    stacked = np.concatenate([norm.apply(m).values for m in mels])
    assert abs(stacked.mean()) < 1e-12
    assert stacked.std() == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(DataError, match="already applied"):
        norm.apply(norm.apply(mels[0]))
    with pytest.raises(DataError):
        Normalizer.fit([norm.apply(mels[0])])
    assert Normalizer.fit([MelSpec(np.ones((2, 2)))]).std == 1.0


def test_fix_length_truncates_and_pads(rng):
    v = rng.standard_normal((6, 3))
    np.testing.assert_array_equal(fix_length(MelSpec(v), 6).values, v)
    np.testing.assert_array_equal(fix_length(MelSpec(v), 4).values, v[:4])
    padded = fix_length(MelSpec(v, normalized=True), 9)
    assert padded.normalized
    np.testing.assert_array_equal(padded.values[:6], v)
    np.testing.assert_array_equal(padded.values[6:], np.zeros((3, 3)))


def test_padding_happens_after_normalization(fe_cfg):
    mel = log_mel(AudioClip(np.zeros(400), 8000), fe_cfg)
    assert mel.frames < fe_cfg.target_frames
    norm = Normalizer(mean=-3.0, std=2.0)
    patches = clip_patches(mel, fe_cfg, norm)
    fixed = fix_length(norm.apply(mel), fe_cfg.target_frames)
    np.testing.assert_array_equal(patches, extract_patches(fixed.values, fe_cfg))
    assert np.all(fixed.values[mel.frames:] == 0.0)


def _patch_cfg(**kw) -> FrontendConfig:
    base = dict(sample_rate=8000, window_len=200, hop_len=80, n_fft=256, fmax=4000.0)
    base.update(kw)
    return FrontendConfig(**base)


def test_unit_patches_are_time_major_cells(rng):
    cfg = _patch_cfg(mel_bins=4, target_frames=8, patch_t=1, patch_f=1, seq_len=32, embed_dim=3)
    v = rng.standard_normal((8, 4))
    patches = extract_patches(v, cfg)
    assert patches.shape == (32, 1)
    np.testing.assert_array_equal(patches[:, 0], v.T.reshape(-1))


def test_patch_embed_matches_loop_oracle(rng):
    cfg = _patch_cfg(mel_bins=4, target_frames=8, patch_t=2, patch_f=2, seq_len=8, embed_dim=3)
    v = rng.standard_normal((8, 4))
    params = {"patch_embed.weight": rng.standard_normal((4, 3)), "patch_embed.bias": rng.standard_normal(3)}
    tokens = patch_embed(MelSpec(v), params, cfg).data

    expected = np.zeros((8, 3))
    for f_idx in range(2):
        for t_idx in range(4):
            s = f_idx * 4 + t_idx
            patch = v[2 * t_idx:2 * t_idx + 2, 2 * f_idx:2 * f_idx + 2].reshape(-1)
            for d in range(3):
                expected[s, d] = sum(patch[j] * params["patch_embed.weight"][j, d] for j in range(4))
                expected[s, d] += params["patch_embed.bias"][d]
    np.testing.assert_allclose(tokens, expected, rtol=0, atol=1e-12)


def test_zero_projection_gives_zero_tokens(rng, fe_cfg):
    params = {"patch_embed.weight": np.zeros((32, 16)), "patch_embed.bias": np.zeros(16)}
    tokens = patch_embed(MelSpec(rng.standard_normal((16, 32))), params, fe_cfg)
    assert tokens.shape == (16, 16)
    np.testing.assert_array_equal(tokens.data, np.zeros((16, 16)))


def test_patch_shape_errors(rng, fe_cfg):
    with pytest.raises(ShapeError):
        extract_patches(np.zeros((15, 32)), fe_cfg)
    with pytest.raises(ShapeError):
        patch_embed(MelSpec(np.ones((16, 32))), {"patch_embed.weight": np.zeros((8, 16)),
                                                 "patch_embed.bias": np.zeros(16)}, fe_cfg)
    with pytest.raises(ConfigError):
        _patch_cfg(mel_bins=4, target_frames=8, patch_t=3, patch_f=2, seq_len=8)


# ---------------------------------------------------------------------
# Manifest and splits
# ---------------------------------------------------------------------


def _write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_manifest_resolves_relative_paths(tmp_path):
    p = write_manifest([{"path": "a.wav", "label": 2, "split": "train"},
                        {"path": "b.wav", "label": 0, "split": "fold3"}], tmp_path / "m.csv")
    m = load_manifest(p)
    assert len(m) == 2
    assert m.num_classes == 3
    assert m.rows["path"].tolist()[0] == str(tmp_path.resolve() / "a.wav")
    assert m.folds() == ["fold3"]
    assert m.has_split("train") and not m.has_split("test")


@pytest.mark.parametrize("body, message", [
    ("a.wav,x,train\n", "row 0: label 'x'"),
    ("a.wav,1,train\nb.wav,-1,test\n", "row 1: label -1"),
    ("a.wav,1,train\nb.wav,1,dev\n", "row 1: unknown split 'dev'"),
    ("a.wav,1,train\n,1,test\n", "row 1: empty path"),
])
def test_manifest_row_errors_name_the_row(tmp_path, body, message):
    p = _write_csv(tmp_path / "m.csv", "path,label,split\n" + body)
    with pytest.raises(DataError, match=message):
        load_manifest(p)


def test_manifest_header_and_missing_file(tmp_path):
    with pytest.raises(DataError, match="header"):
        load_manifest(_write_csv(tmp_path / "m.csv", "file,label,split\na.wav,1,train\n"))
    with pytest.raises(DataError, match="not found"):
        load_manifest(tmp_path / "absent.csv")


def test_build_splits_needs_training_rows(tone_manifest, fe_cfg):
    manifest = load_manifest(tone_manifest)
    bank = FeatureBank(fe_cfg)
    with pytest.raises(DataError, match="training split is empty"):
        build_splits(bank, {"train": manifest.split("fold0"), "test": manifest.split("test")})


def test_build_splits_shapes_and_shared_cache(tone_manifest, fe_cfg):
    manifest = load_manifest(tone_manifest)
    bank = FeatureBank(fe_cfg)
    groups = {name: manifest.split(name) for name in ("train", "val", "test")}
    groups["empty"] = pd.DataFrame(columns=["path", "label", "split"])
    arrays, norm = build_splits(bank, groups)
    assert set(arrays) == {"train", "val", "test"}
    assert arrays["train"].patches.shape == (24, fe_cfg.seq_len, fe_cfg.patch_dim)
    assert arrays["val"].labels.tolist() == [0, 1, 2, 3, 0, 1, 2, 3]
    assert len(bank) == 40
    assert norm.std > 0
