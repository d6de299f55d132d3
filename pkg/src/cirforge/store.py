"""Content-addressed local component store.

Layout under one root::

    blobs/sha256/<digest>          payload archives, named by content
    meta/<mgr>/<name>/<ver>/<env>.meta   index documents (URL-quoted parts)
    extracted/<digest>/            extracted payload trees (logically
                                   immutable once present)
    tmp/                           staging area on the same filesystem

Crash safety comes from ordering and atomic renames: payload bytes are
staged in tmp/ and renamed into blobs/ before the meta document appears,
and the meta document itself is staged and renamed. A crash at any point
leaves either no trace or an orphan in tmp//blobs/, never an index entry
describing bytes that are absent or wrong. fsck() checks exactly that.
"""

from __future__ import annotations

import io
import os
import shutil
import tarfile
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import quote, unquote

from .archive import CHUNK, safe_extract, sha256_digest
from .errors import (
    DigestMismatchError,
    ImmutabilityError,
    NotFoundError,
    StoreError,
)
from .model import (
    ComponentId,
    ManagerKind,
    UniformComponentMeta,
    parse_meta,
    serialize_meta,
)

__all__ = ["LocalStore", "FsckReport", "PruneStats"]


@dataclass
class FsckReport:
    """Store health report. Orphans are tolerable leftovers; dangling and
    corrupt entries are integrity violations."""

    dangling: list[str] = field(default_factory=list)
    corrupt: list[str] = field(default_factory=list)
    orphan_blobs: list[str] = field(default_factory=list)
    orphan_extracted: list[str] = field(default_factory=list)
    tmp_entries: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.dangling and not self.corrupt


@dataclass
class PruneStats:
    removed_blobs: int = 0
    removed_extracted: int = 0
    removed_tmp: int = 0
    freed_bytes: int = 0


def _quote(part: str) -> str:
    return quote(part, safe="")


class LocalStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.blob_dir = self.root / "blobs" / "sha256"
        self.meta_dir = self.root / "meta"
        self.extract_dir = self.root / "extracted"
        self.tmp_dir = self.root / "tmp"
        for directory in (self.blob_dir, self.meta_dir, self.extract_dir, self.tmp_dir):
            directory.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    # -- blobs ------------------------------------------------------------

    def blob_path(self, digest: str) -> Path:
        return self.blob_dir / digest

    def has_blob(self, digest: str) -> bool:
        return self.blob_path(digest).is_file()

    def _tmp_path(self, hint: str) -> Path:
        return self.tmp_dir / f"{hint}-{uuid.uuid4().hex}"

    def put_blob(self, payload, expected_digest: str | None = None) -> str:
        """Stage payload bytes and publish them under their digest.

        payload may be bytes, a readable binary stream, or a Path. The
        write happens in tmp/ first; the blob appears atomically or not at
        all. A digest mismatch leaves the store untouched."""
        if isinstance(payload, (bytes, bytearray)):
            stream = io.BytesIO(payload)
        elif isinstance(payload, Path):
            stream = open(payload, "rb")
        else:
            stream = payload
        tmp = self._tmp_path("blob")
        import hashlib

        digest = hashlib.sha256()
        try:
            with open(tmp, "wb") as out:
                while chunk := stream.read(CHUNK):
                    digest.update(chunk)
                    out.write(chunk)
                out.flush()
                os.fsync(out.fileno())
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise
        finally:
            if isinstance(payload, Path):
                stream.close()
        actual = digest.hexdigest()
        if expected_digest and actual != expected_digest:
            tmp.unlink(missing_ok=True)
            raise DigestMismatchError(expected_digest, actual)
        final = self.blob_path(actual)
        if final.exists():
            tmp.unlink(missing_ok=True)
            return actual
        os.replace(tmp, final)
        return actual

    # -- metadata index ---------------------------------------------------

    def meta_path(self, cid: ComponentId) -> Path:
        return (self.meta_dir / cid.manager.path_tag / _quote(cid.name)
                / _quote(cid.version) / (_quote(cid.environment) + ".meta"))

    def put_meta(self, meta: UniformComponentMeta) -> None:
        """Publish an index document. The payload blob must already exist;
        rebinding an id to a different digest is refused."""
        if not meta.payload_digest:
            raise StoreError(f"meta for {meta.id} has no payload digest")
        if not self.has_blob(meta.payload_digest):
            raise StoreError(
                f"refusing to index {meta.id}: blob {meta.payload_digest} absent")
        path = self.meta_path(meta.id)
        existing = self._read_meta_file(path)
        if existing is not None:
            if existing.payload_digest != meta.payload_digest:
                raise ImmutabilityError(
                    f"{meta.id} is already bound to {existing.payload_digest}, "
                    f"refusing rebind to {meta.payload_digest}")
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self._tmp_path("meta")
        try:
            with open(tmp, "w", encoding="utf-8") as out:
                out.write(serialize_meta(meta, include_payload=True))
                out.flush()
                os.fsync(out.fileno())
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise
        os.replace(tmp, path)

    def publish(self, meta: UniformComponentMeta, payload) -> ComponentId:
        """Atomically-enough publish: blob first, then index entry."""
        with self._lock_for(f"publish:{meta.id}"):
            digest = self.put_blob(payload, expected_digest=meta.payload_digest or None)
            if meta.payload_digest and digest != meta.payload_digest:
                raise DigestMismatchError(meta.payload_digest, digest)
            if not meta.payload_digest:
                size = self.blob_path(digest).stat().st_size
                meta = meta.with_payload(digest, size)
            self.put_meta(meta)
            return meta.id

    def _read_meta_file(self, path: Path) -> UniformComponentMeta | None:
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None
        return parse_meta(text)

    def get_meta(self, cid: ComponentId) -> UniformComponentMeta | None:
        return self._read_meta_file(self.meta_path(cid))

    def list_versions(self, manager: ManagerKind, name: str) -> list[str]:
        base = self.meta_dir / manager.path_tag / _quote(name)
        if not base.is_dir():
            return []
        return sorted(unquote(entry.name) for entry in base.iterdir() if entry.is_dir())

    def list_variants(self, manager: ManagerKind, name: str,
                      version: str) -> list[UniformComponentMeta]:
        base = self.meta_dir / manager.path_tag / _quote(name) / _quote(version)
        if not base.is_dir():
            return []
        metas = []
        for entry in sorted(base.glob("*.meta")):
            meta = self._read_meta_file(entry)
            if meta is not None:
                metas.append(meta)
        return metas

    def iter_metas(self):
        for path in sorted(self.meta_dir.rglob("*.meta")):
            meta = self._read_meta_file(path)
            if meta is not None:
                yield meta

    def list_names(self, manager: ManagerKind) -> list[str]:
        base = self.meta_dir / manager.path_tag
        if not base.is_dir():
            return []
        return sorted(unquote(entry.name) for entry in base.iterdir() if entry.is_dir())

    def cached_digests(self) -> frozenset[str]:
        return frozenset(
            entry.name for entry in self.blob_dir.iterdir() if entry.is_file())

    # -- extraction -------------------------------------------------------

    def extracted_path(self, digest: str) -> Path:
        return self.extract_dir / digest

    def is_extracted(self, digest: str) -> bool:
        return self.extracted_path(digest).is_dir()

    def extract(self, digest: str) -> Path:
        """Extract a payload blob once; concurrent callers share the work.

        The extracted tree is staged in tmp/ and renamed into place, so a
        crash mid-extraction leaves only staging litter."""
        dest = self.extracted_path(digest)
        if dest.is_dir():
            return dest
        with self._lock_for(f"extract:{digest}"):
            if dest.is_dir():
                return dest
            blob = self.blob_path(digest)
            if not blob.is_file():
                raise NotFoundError(f"no blob {digest} to extract")
            staging = self._tmp_path("extract")
            staging.mkdir()
            try:
                self._extract_payload(blob, staging)
                os.replace(staging, dest)
            except OSError as exc:
                shutil.rmtree(staging, ignore_errors=True)
                if dest.is_dir():  # lost a cross-process race; fine
                    return dest
                raise StoreError(f"extraction of {digest} failed: {exc}") from exc
            except BaseException:
                shutil.rmtree(staging, ignore_errors=True)
                raise
            return dest

    def _extract_payload(self, blob: Path, staging: Path) -> None:
        with tarfile.open(blob, mode="r:gz") as tar:
            safe_extract(tar, staging)

    def open_payload(self, cid: ComponentId):
        meta = self.get_meta(cid)
        if meta is None:
            raise NotFoundError(f"component {cid} not in store")
        blob = self.blob_path(meta.payload_digest)
        if not blob.is_file():
            raise StoreError(f"index names missing blob {meta.payload_digest}")
        return meta, open(blob, "rb")

    # -- health -----------------------------------------------------------

    def fsck(self, verify_digests: bool = False) -> FsckReport:
        report = FsckReport()
        referenced: set[str] = set()
        for path in sorted(self.meta_dir.rglob("*.meta")):
            rel = path.relative_to(self.meta_dir).as_posix()
            try:
                meta = parse_meta(path.read_text(encoding="utf-8"))
            except Exception:
                report.corrupt.append(rel)
                continue
            if not meta.payload_digest:
                report.corrupt.append(rel)
                continue
            referenced.add(meta.payload_digest)
            blob = self.blob_path(meta.payload_digest)
            if not blob.is_file():
                report.dangling.append(rel)
            elif verify_digests:
                from .archive import sha256_file

                if sha256_file(blob) != meta.payload_digest:
                    report.corrupt.append(rel)
        for blob in sorted(self.blob_dir.iterdir()):
            if blob.is_file() and blob.name not in referenced:
                report.orphan_blobs.append(blob.name)
        for tree in sorted(self.extract_dir.iterdir()):
            if tree.name not in referenced:
                report.orphan_extracted.append(tree.name)
        report.tmp_entries = sorted(p.name for p in self.tmp_dir.iterdir())
        return report

    def prune(self) -> PruneStats:
        """Drop tmp litter, unreferenced blobs, and their extractions."""
        stats = PruneStats()
        report = self.fsck()
        for name in report.tmp_entries:
            path = self.tmp_dir / name
            stats.freed_bytes += _tree_size(path)
            _remove_any(path)
            stats.removed_tmp += 1
        for digest in report.orphan_blobs:
            path = self.blob_path(digest)
            stats.freed_bytes += path.stat().st_size
            path.unlink()
            stats.removed_blobs += 1
        for digest in report.orphan_extracted:
            path = self.extracted_path(digest)
            stats.freed_bytes += _tree_size(path)
            shutil.rmtree(path)
            stats.removed_extracted += 1
        return stats


def _tree_size(path: Path) -> int:
    if path.is_file():
        return path.stat().st_size
    total = 0
    for sub in path.rglob("*"):
        if sub.is_file():
            total += sub.stat().st_size
    return total


def _remove_any(path: Path) -> None:
    if path.is_dir() and not path.is_symlink():
        shutil.rmtree(path)
    else:
        path.unlink(missing_ok=True)
