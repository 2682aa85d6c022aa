"""Dataset manifests: JSON-lines utterance lists and subset filtering.

A manifest is one JSON object per line:

    {"utterance_id": "...", "wav_path": "...", "label": "angry",
     "session": "S1", "scripted": false}

Relative wav paths are resolved against the manifest's directory so a
manifest can move together with its audio.
"""

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, ParseError, ValidationError

CLASSES = ("angry", "happy", "sad", "neutral")

DATASETS = ("improvisation", "script", "full")

_REQUIRED = {
    "utterance_id": str,
    "wav_path": str,
    "label": str,
    "session": str,
    "scripted": bool,
}


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    wav_path: Path
    label: int
    session: str
    scripted: bool


def _parse_line(line_no, raw, base_dir):
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line_no) from exc
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", line_no)
    for key, kind in _REQUIRED.items():
        if key not in obj:
            raise ParseError(f"missing field {key!r}", line_no)
        if not isinstance(obj[key], kind):
            raise ParseError(f"field {key!r} must be {kind.__name__}", line_no)

    label = obj["label"]
    if label == "excited":
        raise ValidationError(
            f"label 'excited' on utterance {obj['utterance_id']!r}: "
            "merge excited into 'happy' when exporting the manifest"
        )
    if label not in CLASSES:
        raise ValidationError(
            f"unknown label {label!r} on utterance {obj['utterance_id']!r}; "
            f"allowed labels: {', '.join(CLASSES)}"
        )

    wav_path = Path(obj["wav_path"])
    if not wav_path.is_absolute():
        wav_path = base_dir / wav_path
    return UtteranceRecord(
        utterance_id=obj["utterance_id"],
        wav_path=wav_path,
        label=CLASSES.index(label),
        session=obj["session"],
        scripted=obj["scripted"],
    )


def parse_manifest(path):
    """Read a JSON-lines manifest into UtteranceRecords.

    Blank lines are skipped. Raises ParseError (with line number) for
    malformed lines and ValidationError for bad labels or duplicate ids.
    """
    path = Path(path)
    base_dir = path.parent
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            rec = _parse_line(line_no, raw, base_dir)
            if rec.utterance_id in seen:
                raise ValidationError(f"duplicate utterance id {rec.utterance_id!r}")
            seen.add(rec.utterance_id)
            records.append(rec)
    return records


def filter_records(records, dataset):
    """Select the improvised subset, the scripted subset, or everything."""
    if dataset == "improvisation":
        return [r for r in records if not r.scripted]
    if dataset == "script":
        return [r for r in records if r.scripted]
    if dataset == "full":
        return list(records)
    raise ConfigError(f"unknown dataset {dataset!r}; expected one of {', '.join(DATASETS)}")
