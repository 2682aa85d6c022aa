"""Synthetic dataset generation: counts, determinism, class separability."""

import numpy as np
import pytest

from glam.audio import MfccConfig, compute_mfcc, load_wav
from glam.errors import ConfigError
from glam.manifest import CLASSES, parse_manifest
from glam.synth import generate_synth_dataset, synth_clip


def test_dataset_counts_and_layout(tmp_path):
    manifest = generate_synth_dataset(tmp_path, n_per_class=25, seed=0)
    records = parse_manifest(manifest)
    assert len(records) == 100
    wavs = sorted((tmp_path / "wav").glob("*.wav"))
    assert len(wavs) == 100
    per_class = {label: 0 for label in range(4)}
    for rec in records:
        per_class[rec.label] += 1
        assert rec.wav_path.exists()
    assert all(count == 25 for count in per_class.values())


def test_generation_is_byte_deterministic(tmp_path):
    m1 = generate_synth_dataset(tmp_path / "a", n_per_class=2, seed=5)
    m2 = generate_synth_dataset(tmp_path / "b", n_per_class=2, seed=5)
    assert m1.read_text() == m2.read_text()
    for rec in parse_manifest(m1):
        twin = tmp_path / "b" / "wav" / rec.wav_path.name
        assert rec.wav_path.read_bytes() == twin.read_bytes()


def test_different_seeds_differ(tmp_path):
    m1 = generate_synth_dataset(tmp_path / "a", n_per_class=1, seed=0)
    m2 = generate_synth_dataset(tmp_path / "b", n_per_class=1, seed=1)
    a = parse_manifest(m1)[0].wav_path.read_bytes()
    b = parse_manifest(m2)[0].wav_path.read_bytes()
    assert a != b


def test_classes_have_distinct_audio():
    clips = [synth_clip(k, np.random.default_rng(0)) for k in range(4)]
    for i in range(4):
        for j in range(i + 1, 4):
            assert clips[i].tobytes() != clips[j].tobytes()


def test_rejects_empty_class():
    with pytest.raises(ConfigError):
        generate_synth_dataset("/tmp/unused", n_per_class=0)


def test_classes_separable_by_nearest_centroid(tmp_path):
    # mean MFCC vectors should separate the four classes almost perfectly;
    # anything close to chance means the acoustics collapsed
    manifest = generate_synth_dataset(tmp_path, n_per_class=6, seed=2)
    records = parse_manifest(manifest)
    cfg = MfccConfig()
    vectors = {}
    for rec in records:
        feats = compute_mfcc(load_wav(rec.wav_path), cfg)
        vectors[rec.utterance_id] = (feats.mean(axis=0), rec.label)

    fit = {k: [] for k in range(4)}
    held_out = []
    for utterance_id, (vec, label) in sorted(vectors.items()):
        if len(fit[label]) < 3:
            fit[label].append(vec)
        else:
            held_out.append((vec, label))
    centroids = {k: np.mean(v, axis=0) for k, v in fit.items()}

    correct = 0
    for vec, label in held_out:
        scores = {k: np.linalg.norm(vec - c) for k, c in centroids.items()}
        if min(scores, key=scores.get) == label:
            correct += 1
    assert len(held_out) == 12
    assert correct / len(held_out) > 0.8
