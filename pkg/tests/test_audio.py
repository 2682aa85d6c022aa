"""MFCC frontend: loading, framing, filterbank, segmentation, normalization."""

import numpy as np
import pytest
import scipy.fft
from scipy.io import wavfile

from glam.audio import (AudioClip, FeatureStats, MfccConfig, compute_mfcc,
                        filterbank_centers_hz, frame_signal, hz_to_mel,
                        load_wav, log_mel_energies, mel_filterbank, mel_to_hz,
                        normalize_features, segment_frames, segment_step,
                        segment_utterance)
from glam.errors import (ConfigError, FormatError, GlamIOError, TooShortError,
                         ValidationError)

CFG = MfccConfig()


def noise_clip(seconds, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    n = int(round(seconds * CFG.sample_rate))
    return AudioClip(scale * rng.standard_normal(n), CFG.sample_rate)


# ---------------------------------------------------------------------------
# WAV loading


def test_load_wav_int16_scaling(tmp_path):
    path = tmp_path / "a.wav"
    wavfile.write(path, 16000, np.array([0, 16384, -16384], dtype=np.int16))
    clip = load_wav(path)
    assert clip.sample_rate == 16000
    np.testing.assert_array_equal(clip.samples, [0.0, 0.5, -0.5])


def test_load_wav_stereo_averaging(tmp_path):
    path = tmp_path / "s.wav"
    wavfile.write(path, 16000, np.array([[1.0, 0.0], [0.5, 0.5]], dtype=np.float32))
    clip = load_wav(path)
    np.testing.assert_allclose(clip.samples, [0.5, 0.5], rtol=1e-7)


def test_load_wav_float32_passthrough(tmp_path):
    path = tmp_path / "f.wav"
    wavfile.write(path, 8000, np.array([0.25, -0.75], dtype=np.float32))
    clip = load_wav(path)
    assert clip.sample_rate == 8000
    np.testing.assert_allclose(clip.samples, [0.25, -0.75], rtol=1e-7)


def test_load_wav_truncated_header(tmp_path):
    path = tmp_path / "broken.wav"
    path.write_bytes(b"RIFF\x10\x00\x00\x00WAVE")
    with pytest.raises(FormatError):
        load_wav(path)


def test_load_wav_unsupported_encoding(tmp_path):
    path = tmp_path / "i32.wav"
    wavfile.write(path, 16000, np.array([1, 2, 3], dtype=np.int32))
    with pytest.raises(FormatError):
        load_wav(path)


def test_load_wav_missing_file(tmp_path):
    with pytest.raises(GlamIOError):
        load_wav(tmp_path / "nope.wav")


# ---------------------------------------------------------------------------
# framing and MFCC arithmetic


def test_two_second_clip_gives_198_frames():
    feats = compute_mfcc(noise_clip(2.0), CFG)
    assert feats.shape == (198, 40)


def test_four_second_clip_gives_398_frames():
    feats = compute_mfcc(noise_clip(4.0), CFG)
    assert feats.shape == (398, 40)


def test_frame_count_formula():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = int(rng.integers(CFG.window_len, 5 * CFG.sample_rate))
        frames = frame_signal(rng.standard_normal(n), CFG)
        assert frames.shape == (1 + (n - CFG.window_len) // CFG.hop, CFG.window_len)


def test_rate_mismatch_rejected():
    clip = AudioClip(np.zeros(32000), 8000)
    with pytest.raises(ConfigError):
        compute_mfcc(clip, CFG)


def test_clip_shorter_than_window_rejected():
    with pytest.raises(TooShortError):
        compute_mfcc(AudioClip(np.zeros(399), 16000), CFG)


def test_silence_is_the_dct_of_the_log_floor():
    feats = compute_mfcc(AudioClip(np.zeros(32000), 16000), CFG)
    expected = scipy.fft.dct(np.full(40, np.log(CFG.log_floor)), type=2,
                             norm="ortho").astype(np.float32)
    for row in feats:
        np.testing.assert_array_equal(row, expected)


def test_pure_tone_peaks_at_nearest_mel_filter():
    t = np.arange(32000) / 16000.0
    clip = AudioClip(0.5 * np.sin(2.0 * np.pi * 1000.0 * t), 16000)
    log_mel = log_mel_energies(clip, CFG)
    target = int(np.argmin(np.abs(filterbank_centers_hz(CFG) - 1000.0)))
    assert np.all(log_mel.argmax(axis=1) == target)


def test_amplitude_doubling_shifts_log_energy_by_log4():
    clip = noise_clip(2.0, seed=2, scale=0.2)
    loud = AudioClip(2.0 * clip.samples, clip.sample_rate)
    shift = log_mel_energies(loud, CFG) - log_mel_energies(clip, CFG)
    np.testing.assert_allclose(shift, np.log(4.0), atol=1e-6)


def test_one_hop_shift_drops_one_frame():
    # dropping exactly one hop of samples shifts the frame grid by one;
    # only the frame containing the new boundary sample differs
    x = noise_clip(3.0, seed=3).samples
    full = compute_mfcc(AudioClip(x, 16000), CFG)
    shifted = compute_mfcc(AudioClip(x[CFG.hop:], 16000), CFG)
    assert shifted.shape[0] == full.shape[0] - 1
    np.testing.assert_allclose(shifted[1:], full[2:], rtol=1e-6, atol=1e-6)


# ---------------------------------------------------------------------------
# mel scale and filterbank


def test_mel_scale_pinned_value():
    assert abs(hz_to_mel(8000.0) - 2840.023046708319) < 1e-9


def test_mel_round_trip():
    f = np.array([0.0, 125.0, 1000.0, 4000.0, 8000.0])
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)


def test_filterbank_layout():
    fb = mel_filterbank(CFG)
    assert fb.shape == (40, CFG.fft_size // 2 + 1)
    assert np.all(fb >= 0.0)
    assert np.all(fb.max(axis=1) > 0.0)  # every triangle covers some bin
    centers = filterbank_centers_hz(CFG)
    assert np.all(np.diff(centers) > 0.0)
    assert centers[-1] < CFG.sample_rate / 2.0


# ---------------------------------------------------------------------------
# segmentation


def test_segment_offsets_for_four_seconds():
    feats = compute_mfcc(noise_clip(4.0, seed=4), CFG)
    segs = segment_utterance(feats, CFG, "u0", 1)
    assert len(segs) == 6
    for i, seg in enumerate(segs):
        assert seg.segment_index == i
        assert seg.utterance_id == "u0"
        assert seg.label == 1
        np.testing.assert_array_equal(seg.data, feats[40 * i: 40 * i + 198])


def test_exact_window_gives_single_unpadded_segment():
    feats = np.random.default_rng(5).standard_normal((198, 40)).astype(np.float32)
    segs = segment_utterance(feats, CFG)
    assert len(segs) == 1
    np.testing.assert_array_equal(segs[0].data, feats)


def test_short_utterance_zero_padded():
    feats = np.random.default_rng(6).standard_normal((100, 40)).astype(np.float32)
    segs = segment_utterance(feats, CFG)
    assert len(segs) == 1
    np.testing.assert_array_equal(segs[0].data[:100], feats)
    assert np.all(segs[0].data[100:] == 0.0)


def test_segment_count_formula():
    for frames in (198, 199, 237, 238, 278, 500, 37):
        feats = np.zeros((frames, 40), dtype=np.float32)
        expected = max(1, (frames - 198) // 40 + 1)
        assert len(segment_utterance(feats, CFG)) == expected


def test_segment_rejects_empty_or_misshapen_features():
    with pytest.raises(ValidationError):
        segment_utterance(np.zeros((0, 40), dtype=np.float32), CFG)
    with pytest.raises(ValidationError):
        segment_utterance(np.zeros((198, 39), dtype=np.float32), CFG)


def test_default_segment_geometry():
    assert segment_frames(CFG) == 198
    assert segment_step(CFG) == 40


# ---------------------------------------------------------------------------
# normalization


def make_segments(n, seed):
    rng = np.random.default_rng(seed)
    feats = (5.0 + 3.0 * rng.standard_normal((n * 198, 40))).astype(np.float32)
    return segment_utterance(feats, CFG)


def test_normalize_with_own_stats():
    normed, stats = normalize_features(make_segments(3, seed=7))
    stacked = np.concatenate([s.data for s in normed]).astype(np.float64)
    assert np.all(np.abs(stacked.mean(axis=0)) < 1e-6)
    assert np.all(np.abs(stacked.std(axis=0) - 1.0) < 1e-6)
    assert stats.mean.shape == (40,) and stats.std.shape == (40,)


def test_normalize_constant_column_hits_std_floor():
    segs = make_segments(1, seed=8)
    segs[0].data[:, 5] = 2.5  # one degenerate coefficient
    normed, stats = normalize_features(segs)
    assert np.all(normed[0].data[:, 5] == 0.0)
    assert stats.std[5] == 1e-8


def test_normalize_is_idempotent_on_normalized_data():
    normed, _ = normalize_features(make_segments(2, seed=9))
    again, _ = normalize_features(normed)
    for a, b in zip(again, normed):
        np.testing.assert_allclose(a.data, b.data, atol=1e-6)


def test_normalize_reuses_supplied_stats():
    train = make_segments(2, seed=10)
    test = make_segments(1, seed=11)
    _, stats = normalize_features(train)
    normed, returned = normalize_features(test, stats)
    assert returned is stats
    expected = ((test[0].data.astype(np.float64) - stats.mean) / stats.std).astype(np.float32)
    np.testing.assert_array_equal(normed[0].data, expected)


def test_normalize_keeps_segment_identity():
    segs = segment_utterance(np.ones((198, 40), dtype=np.float32), CFG, "utt9", 2)
    normed, _ = normalize_features(segs)
    assert normed[0].utterance_id == "utt9"
    assert normed[0].label == 2
    assert segs[0].data[0, 0] == 1.0  # input segments are not mutated


def test_normalize_empty_input():
    with pytest.raises(ValidationError):
        normalize_features([])


# ---------------------------------------------------------------------------
# config validation


def test_config_rejects_bad_geometry():
    with pytest.raises(ConfigError):
        MfccConfig(fft_size=256)  # smaller than the window
    with pytest.raises(ConfigError):
        MfccConfig(n_mfcc=41)
    with pytest.raises(ConfigError):
        MfccConfig(segment_overlap_seconds=2.0)
    with pytest.raises(ConfigError):
        MfccConfig(pre_emphasis=1.0)
    with pytest.raises(ConfigError):
        MfccConfig(log_floor=0.0)
