"""Synthetic four-class dataset for end-to-end smoke tests.

Each class k gets a distinct fundamental (200 Hz * (k+1)) with a second
harmonic and a slow amplitude modulation whose rate also depends on the
class, plus a little white noise so clips are not trivially identical.
The classes are cleanly separable, which is the point: a functioning
pipeline should score far above chance on this data.
"""

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError
from .manifest import CLASSES

SAMPLE_RATE = 16000


def synth_clip(class_index, rng, sample_rate=SAMPLE_RATE):
    """One synthetic clip as int16 samples. Draw order is part of the format."""
    duration = rng.uniform(2.0, 4.0)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    n = int(round(duration * sample_rate))
    t = np.arange(n, dtype=np.float64) / sample_rate
    f0 = 200.0 * (class_index + 1)
    mod_rate = 2.0 + class_index
    envelope = 1.0 + 0.5 * np.sin(2.0 * np.pi * mod_rate * t + phases[2])
    tone = (np.sin(2.0 * np.pi * f0 * t + phases[0])
            + 0.6 * np.sin(2.0 * np.pi * 2.0 * f0 * t + phases[1]))
    x = 0.35 * envelope * tone + 0.01 * rng.standard_normal(n)
    return (np.clip(x, -1.0, 1.0) * 32767.0).astype(np.int16)


def generate_synth_dataset(out_dir, n_per_class=25, seed=0):
    """Write WAV files plus a manifest under out_dir; returns the manifest path.

    Every clip gets its own generator seeded by (seed, class, index), so the
    output is byte-identical for a given seed regardless of generation order.
    """
    if n_per_class < 1:
        raise ConfigError("n_per_class must be >= 1")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for k, label in enumerate(CLASSES):
        for j in range(n_per_class):
            rng = np.random.default_rng([seed, k, j])
            samples = synth_clip(k, rng)
            utterance_id = f"synth_{label}_{j:03d}"
            wavfile.write(wav_dir / f"{utterance_id}.wav", SAMPLE_RATE, samples)
            lines.append(json.dumps({
                "utterance_id": utterance_id,
                "wav_path": f"wav/{utterance_id}.wav",
                "label": label,
                "session": f"S{j % 5 + 1}",
                "scripted": j % 2 == 1,
            }, sort_keys=True))
    manifest_path = out_dir / "manifest.jsonl"
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest_path
