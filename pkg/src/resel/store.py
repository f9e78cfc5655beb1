"""Durable, resumable JSONL persistence for samples, rollouts, and labels.

One self-contained JSON record per line, images by reference (path or
URL), feature vectors as base64-encoded little-endian float32 to keep
lines compact. Unknown keys are preserved so the schema can evolve.

Line schema:
    id, image, query, gts, metric,
    rollout [{r, response, utility}], label {r, k},
    features {dim, b64}, status, error
"""

from __future__ import annotations

import base64
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from .errors import DuplicateId, SchemaError, StoreError
from .labeler import RolloutRecord, SufficiencyLabel

logger = logging.getLogger(__name__)

_KNOWN_KEYS = {
    "id", "image", "query", "gts", "metric",
    "rollout", "label", "features", "status", "error",
}

STATUSES = ("pending", "labeled", "failed")


def features_to_b64(vector: np.ndarray) -> dict[str, Any]:
    v = np.asarray(vector, dtype="<f4")
    return {"dim": int(v.shape[0]), "b64": base64.b64encode(v.tobytes()).decode("ascii")}


def features_from_b64(d: dict[str, Any]) -> np.ndarray:
    raw = base64.b64decode(d["b64"])
    v = np.frombuffer(raw, dtype="<f4")
    if v.shape[0] != int(d["dim"]):
        raise SchemaError(f"feature blob holds {v.shape[0]} floats, declared dim {d['dim']}")
    return v.astype(np.float64)


@dataclass
class SampleRecord:
    sample_id: str
    image_ref: str
    query: str
    ground_truths: list[str]
    metric: str = "anls"
    rollout: RolloutRecord | None = None
    label: SufficiencyLabel | None = None
    features: np.ndarray | None = None
    status: str = "pending"
    error: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise SchemaError(f"unknown status {self.status!r}")
        if self.status == "labeled" and (self.rollout is None or self.label is None):
            raise SchemaError("labeled records need both rollout and label")
        if self.status == "failed" and not self.error:
            raise SchemaError("failed records need an error string")

    def replace(self, **changes) -> "SampleRecord":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.sample_id,
            "image": self.image_ref,
            "query": self.query,
            "gts": list(self.ground_truths),
            "metric": self.metric,
            "status": self.status,
        }
        if self.rollout is not None:
            d["rollout"] = self.rollout.to_list()
        if self.label is not None:
            d["label"] = self.label.to_dict()
        if self.features is not None:
            d["features"] = features_to_b64(self.features)
        if self.error is not None:
            d["error"] = self.error
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SampleRecord":
        try:
            return cls(
                sample_id=str(d["id"]),
                image_ref=str(d["image"]),
                query=str(d["query"]),
                ground_truths=[str(g) for g in d["gts"]],
                metric=str(d.get("metric", "anls")),
                rollout=RolloutRecord.from_list(d["rollout"]) if "rollout" in d else None,
                label=SufficiencyLabel.from_dict(d["label"]) if "label" in d else None,
                features=features_from_b64(d["features"]) if "features" in d else None,
                status=str(d.get("status", "pending")),
                error=d.get("error"),
                extra={k: v for k, v in d.items() if k not in _KNOWN_KEYS},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad sample record: {exc}") from exc


def iter_records(path: str | Path) -> Iterator[SampleRecord]:
    """Stream records from a JSONL file, one at a time.

    An unterminated final line (the signature a crash leaves behind) is
    skipped with a warning; malformed lines elsewhere raise SchemaError
    with their line number.
    """
    path = Path(path)
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise StoreError(f"cannot read {path}: {exc}") from exc
    with fh:
        for number, raw_line in enumerate(fh, start=1):
            terminated = raw_line.endswith(b"\n")
            line = raw_line.rstrip(b"\r\n")
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                if not terminated:
                    logger.warning("skipping truncated final line %d of %s", number, path)
                    return
                raise SchemaError(f"invalid JSON: {exc}", line_number=number) from exc
            try:
                yield SampleRecord.from_dict(d)
            except SchemaError as exc:
                raise SchemaError(str(exc), line_number=number) from exc


def load_index(path: str | Path) -> set[str]:
    """Sample ids already present in a store file (empty for missing files)."""
    path = Path(path)
    if not path.exists():
        return set()
    return {r.sample_id for r in iter_records(path)}


class JsonlWriter:
    """Append-only single-writer store.

    Every append writes one complete line and flushes, so a crash can
    leave at most one truncated final line. Reopening an existing file
    resumes cleanly: previously stored ids are rejected as duplicates.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.ids: set[str] = load_index(self.path) if self.path.exists() else set()
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.exists():
                self._drop_truncated_tail()
            self._fh = open(self.path, "a", encoding="utf-8")
        except OSError as exc:
            raise StoreError(f"cannot open {self.path} for append: {exc}") from exc

    def _drop_truncated_tail(self) -> None:
        # an unterminated, unparsable final line is a crash leftover;
        # cut it so appended records start on a fresh line
        raw = self.path.read_bytes()
        if not raw or raw.endswith(b"\n"):
            return
        cut = raw.rfind(b"\n") + 1
        tail = raw[cut:]
        try:
            json.loads(tail)
        except json.JSONDecodeError:
            with open(self.path, "r+b") as fh:
                fh.truncate(cut)
            logger.warning("dropped truncated final line of %s", self.path)
        else:
            # valid record that merely lacks its newline: seal it
            with open(self.path, "ab") as fh:
                fh.write(b"\n")

    def append(self, record: SampleRecord) -> None:
        if record.sample_id in self.ids:
            raise DuplicateId(f"sample id {record.sample_id!r} already stored")
        line = json.dumps(record.to_dict(), ensure_ascii=False)
        try:
            self._fh.write(line + "\n")
            self._fh.flush()
        except OSError as exc:
            raise StoreError(f"write to {self.path} failed: {exc}") from exc
        self.ids.add(record.sample_id)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "JsonlWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def read_image_ref(ref: str, base_dir: str | Path | None = None) -> bytes:
    """Fetch image bytes from a local path or an http(s) URL.

    Relative paths resolve against ``base_dir`` (usually the store file's
    directory), which keeps dataset directories relocatable.
    """
    if ref.startswith(("http://", "https://")):
        import httpx

        try:
            resp = httpx.get(ref, timeout=30.0)
            resp.raise_for_status()
            return resp.content
        except httpx.HTTPError as exc:
            raise StoreError(f"cannot fetch image {ref}: {exc}") from exc
    path = Path(ref)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    try:
        return path.read_bytes()
    except OSError as exc:
        raise StoreError(f"cannot read image {ref}: {exc}") from exc
