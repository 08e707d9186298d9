"""Content-addressed artifact store on disk.

Demos, scenarios, trees and reports live one JSON file per artifact under
their own directory, named by a digest of the canonical document. Saving
the same content twice lands on the same id no matter which entry point
produced it. A single index file carries the human-facing metadata (labels,
timestamps, cross references); losing it never loses the artifacts.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .errors import WorkspaceError

KINDS = ("demos", "scenarios", "trees", "reports")
INDEX_NAME = "index.json"
ENV_VAR = "BTTEACH_WORKSPACE"
DEFAULT_DIR = "btteach-workspace"
ID_LEN = 12


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def doc_digest(doc: dict) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def artifact_id(doc: dict) -> str:
    return doc_digest(doc)[:ID_LEN]


@dataclass(frozen=True)
class ArtifactRef:
    id: str
    kind: str
    label: str = ""
    created: str = ""
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "label": self.label,
            "created": self.created,
            "meta": self.meta,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


class Workspace:
    """One directory of artifacts plus its index. Thread-safe within a
    process; concurrent processes get last-writer-wins on the index only."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()
        for kind in KINDS:
            (self.root / kind).mkdir(parents=True, exist_ok=True)
        if not self._index_path.exists():
            self._write_index({})

    @staticmethod
    def open(root: Optional[str | Path] = None) -> "Workspace":
        root = root or os.environ.get(ENV_VAR) or DEFAULT_DIR
        return Workspace(root)

    @property
    def _index_path(self) -> Path:
        return self.root / INDEX_NAME

    def _read_index(self) -> dict:
        try:
            doc = json.loads(self._index_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise WorkspaceError(f"cannot read workspace index: {exc}") from exc
        return doc.get("artifacts", {})

    def _write_index(self, artifacts: dict) -> None:
        _atomic_write(
            self._index_path,
            json.dumps({"schema": 1, "artifacts": artifacts}, indent=2, sort_keys=True),
        )

    @staticmethod
    def _check_kind(kind: str) -> None:
        if kind not in KINDS:
            raise WorkspaceError(f"unknown artifact kind {kind!r}, expected one of {KINDS}")

    def path(self, kind: str, aid: str) -> Path:
        self._check_kind(kind)
        return self.root / kind / f"{aid}.json"

    def exists(self, kind: str, aid: str) -> bool:
        return self.path(kind, aid).exists()

    def save(self, kind: str, doc: dict, label: str = "", meta: Optional[dict] = None) -> ArtifactRef:
        self._check_kind(kind)
        aid = artifact_id(doc)
        path = self.path(kind, aid)
        if not path.exists():
            _atomic_write(path, canonical_json(doc))
        with self._lock:
            artifacts = self._read_index()
            row = artifacts.get(aid, {"kind": kind, "label": "", "created": _now(), "meta": {}})
            if label:
                row["label"] = label
            if meta:
                row["meta"] = {**row.get("meta", {}), **meta}
            artifacts[aid] = row
            self._write_index(artifacts)
        return ArtifactRef(
            id=aid, kind=kind, label=row["label"], created=row["created"], meta=row["meta"]
        )

    def load(self, kind: str, aid: str) -> dict:
        path = self.path(kind, aid)
        if not path.exists():
            raise WorkspaceError(f"no {kind} artifact {aid!r} in {self.root}")
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise WorkspaceError(f"artifact {aid!r} is not valid JSON: {exc}") from exc

    def ref(self, kind: str, aid: str) -> ArtifactRef:
        self._check_kind(kind)
        row = self._read_index().get(aid)
        if row is None or row.get("kind") != kind:
            if self.exists(kind, aid):
                # file survived an index loss; resynthesize a bare row
                return ArtifactRef(id=aid, kind=kind)
            raise WorkspaceError(f"no {kind} artifact {aid!r} in {self.root}")
        return ArtifactRef(
            id=aid,
            kind=kind,
            label=row.get("label", ""),
            created=row.get("created", ""),
            meta=row.get("meta", {}),
        )

    def entries(self, kind: Optional[str] = None) -> list:
        if kind is not None:
            self._check_kind(kind)
        rows = []
        for aid, row in self._read_index().items():
            if kind is not None and row.get("kind") != kind:
                continue
            rows.append(
                ArtifactRef(
                    id=aid,
                    kind=row.get("kind", ""),
                    label=row.get("label", ""),
                    created=row.get("created", ""),
                    meta=row.get("meta", {}),
                )
            )
        rows.sort(key=lambda r: (r.created, r.id))
        return rows

    def resolve(self, kind: str, prefix: str) -> str:
        """Full artifact id from a unique prefix."""
        self._check_kind(kind)
        matches = [r.id for r in self.entries(kind) if r.id.startswith(prefix)]
        if len(matches) == 1:
            return matches[0]
        if not matches:
            raise WorkspaceError(f"no {kind} artifact matches {prefix!r}")
        raise WorkspaceError(f"{prefix!r} is ambiguous: {', '.join(sorted(matches))}")

    def delete(self, kind: str, aid: str) -> None:
        path = self.path(kind, aid)
        with self._lock:
            artifacts = self._read_index()
            artifacts.pop(aid, None)
            self._write_index(artifacts)
        if path.exists():
            path.unlink()
