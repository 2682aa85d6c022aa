"""On-disk feature cache keyed by the frontend configuration.

Each utterance gets two files in the cache directory:

    <utterance_id>.gtsr   all segments, one (n_segments, frames, coeffs) tensor
    <utterance_id>.json   sidecar: label, segment count, config hash

The hash covers every frontend parameter, so changing any of them invalidates
the cache without touching files extracted under other configurations.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio import FeatureSegment, compute_mfcc, load_wav, segment_utterance
from .errors import FormatError, GlamError, GlamIOError
from .tensorio import atomic_write_text, read_tensor, write_tensor

CACHE_DIR_ENV = "GLAM_CACHE_DIR"


def config_hash(cfg):
    """Short stable digest of an MfccConfig."""
    payload = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def cache_dir_for(manifest_path):
    """GLAM_CACHE_DIR if set, else a glam_cache directory next to the manifest."""
    env = os.environ.get(CACHE_DIR_ENV)
    if env:
        return Path(env)
    return Path(manifest_path).parent / "glam_cache"


@dataclass
class ExtractionSummary:
    n_total: int = 0
    n_extracted: int = 0
    n_skipped: int = 0
    failures: list = field(default_factory=list)  # (utterance_id, message)


def _sidecar_path(cache_dir, utterance_id):
    return Path(cache_dir) / f"{utterance_id}.json"


def _tensor_path(cache_dir, utterance_id):
    return Path(cache_dir) / f"{utterance_id}.gtsr"


def _read_sidecar(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError):
        return None


def extract_features(records, cache_dir, cfg, force=False):
    """Extract and cache segment features for every record.

    Entries whose sidecar already carries the current config hash are skipped
    unless force is set. Per-utterance failures (unreadable audio, clips
    shorter than one window) are collected rather than aborting the batch.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    summary = ExtractionSummary(n_total=len(records))
    for rec in records:
        sidecar = _read_sidecar(_sidecar_path(cache_dir, rec.utterance_id))
        if not force and sidecar is not None and sidecar.get("config_hash") == digest:
            summary.n_skipped += 1
            continue
        try:
            clip = load_wav(rec.wav_path)
            features = compute_mfcc(clip, cfg)
            segments = segment_utterance(features, cfg, rec.utterance_id, rec.label)
        except GlamError as exc:
            summary.failures.append((rec.utterance_id, str(exc)))
            continue
        stacked = np.stack([s.data for s in segments]).astype(np.float32)
        write_tensor(_tensor_path(cache_dir, rec.utterance_id), stacked)
        atomic_write_text(
            _sidecar_path(cache_dir, rec.utterance_id),
            json.dumps({
                "utterance_id": rec.utterance_id,
                "label": rec.label,
                "n_segments": len(segments),
                "config_hash": digest,
            }, sort_keys=True) + "\n",
        )
        summary.n_extracted += 1
    return summary


def cached_segment_count(cache_dir, utterance_id):
    """Segment count recorded in an utterance's sidecar, or None if absent."""
    sidecar = _read_sidecar(_sidecar_path(cache_dir, utterance_id))
    if sidecar is None:
        return None
    return sidecar.get("n_segments")


def load_features(records, cache_dir, cfg):
    """Load cached segments for every record as {utterance_id: [FeatureSegment]}.

    Raises GlamIOError when an entry is missing or was extracted under a
    different configuration; run extract_features first.
    """
    cache_dir = Path(cache_dir)
    digest = config_hash(cfg)
    out = {}
    for rec in records:
        sidecar = _read_sidecar(_sidecar_path(cache_dir, rec.utterance_id))
        if sidecar is None or sidecar.get("config_hash") != digest:
            raise GlamIOError(
                f"no cached features for {rec.utterance_id!r} under the current "
                "frontend configuration; extract features first"
            )
        try:
            stacked = read_tensor(_tensor_path(cache_dir, rec.utterance_id))
        except (FormatError, OSError) as exc:
            raise GlamIOError(f"corrupt cache entry for {rec.utterance_id!r}: {exc}") from exc
        if stacked.ndim != 3 or stacked.shape[0] != sidecar.get("n_segments"):
            raise GlamIOError(f"corrupt cache entry for {rec.utterance_id!r}")
        out[rec.utterance_id] = [
            FeatureSegment(stacked[i], rec.utterance_id, i, rec.label)
            for i in range(stacked.shape[0])
        ]
    return out
