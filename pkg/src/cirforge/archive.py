"""Archive plumbing: deterministic tar.gz construction, traversal-safe
extraction, and a minimal Unix ar reader (enough for .deb containers).

Determinism contract: entries are sorted by path, every timestamp is zero,
owners are root, and the gzip wrapper writes no name and a zero mtime, so
identical logical content always produces identical bytes.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import os
import tarfile
from dataclasses import dataclass
from pathlib import Path

from .errors import ConversionError, StoreError

__all__ = [
    "Entry",
    "write_deterministic_tgz",
    "tar_dir_entries",
    "safe_extract",
    "open_tar_auto",
    "ar_members",
    "sha256_digest",
    "sha256_file",
]

CHUNK = 1 << 16


def sha256_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        while chunk := handle.read(CHUNK):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class Entry:
    """One archive member. kind: 'file', 'dir', or 'symlink'."""

    name: str
    kind: str = "file"
    mode: int = 0o644
    data: bytes = b""
    target: str = ""  # symlink target

    def __post_init__(self):
        if self.kind not in ("file", "dir", "symlink"):
            raise ValueError(f"bad entry kind {self.kind!r}")
        if self.name.startswith("/") or ".." in self.name.split("/"):
            raise ValueError(f"unsafe entry name {self.name!r}")


def write_deterministic_tgz(out_path: Path, entries, compresslevel: int = 6) -> str:
    """Write entries (sorted, normalized) as tar.gz; return sha256 hex."""
    ordered = sorted(entries, key=lambda e: e.name)
    seen: set[str] = set()
    digest = hashlib.sha256()

    class _Tee(io.RawIOBase):
        def __init__(self, handle):
            self.handle = handle

        def write(self, data):
            digest.update(data)
            return self.handle.write(data)

    with open(out_path, "wb") as raw:
        tee = _Tee(raw)
        with gzip.GzipFile(fileobj=tee, mode="wb", mtime=0,
                           compresslevel=compresslevel) as gz:
            with tarfile.open(fileobj=gz, mode="w", format=tarfile.PAX_FORMAT) as tar:
                for entry in ordered:
                    if entry.name in seen:
                        raise ValueError(f"duplicate archive entry {entry.name!r}")
                    seen.add(entry.name)
                    info = tarfile.TarInfo(entry.name)
                    info.mtime = 0
                    info.uid = info.gid = 0
                    info.uname = info.gname = ""
                    info.mode = entry.mode
                    if entry.kind == "dir":
                        info.type = tarfile.DIRTYPE
                        tar.addfile(info)
                    elif entry.kind == "symlink":
                        info.type = tarfile.SYMTYPE
                        info.linkname = entry.target
                        tar.addfile(info)
                    else:
                        info.size = len(entry.data)
                        tar.addfile(info, io.BytesIO(entry.data))
    return digest.hexdigest()


def tar_dir_entries(root: Path, prefix: str = "") -> list[Entry]:
    """Collect a directory tree as archive entries under prefix.

    Permission bits (including setuid/setgid/sticky) are preserved;
    symlinks keep their targets verbatim."""
    entries: list[Entry] = []
    root = root.resolve()
    for path in sorted(root.rglob("*")):
        rel = path.relative_to(root).as_posix()
        name = f"{prefix}{rel}" if prefix else rel
        if path.is_symlink():
            entries.append(Entry(name, "symlink", 0o777,
                                 target=os.readlink(path)))
        elif path.is_dir():
            entries.append(Entry(name, "dir", path.stat().st_mode & 0o7777))
        elif path.is_file():
            entries.append(Entry(name, "file", path.stat().st_mode & 0o7777,
                                 data=path.read_bytes()))
    return entries


def _strip_dot_slash(name: str) -> str:
    # Only the "./" prefix goes; lstrip would eat the dot of ".bashrc".
    while name.startswith("./"):
        name = name[2:]
    return name


def _member_is_safe(name: str) -> bool:
    if name.startswith("/") or name.startswith("\\"):
        return False
    return ".." not in name.split("/")


def _resolved_inside(dest: Path, candidate: Path) -> Path | None:
    """Resolve candidate (following symlinks laid down by earlier members)
    and return the result only if it stays under dest."""
    resolved = candidate.resolve()
    if resolved == dest or dest in resolved.parents:
        return resolved
    return None


def safe_extract(tar: tarfile.TarFile, dest: Path) -> list[str]:
    """Extract refusing traversal; returns extracted member names.

    Member paths are re-resolved against what has been written so far, so
    a symlink pointing outside dest cannot be used as a write-through
    ramp by a later member. Hardlinks whose target is outside the archive
    are rejected; device nodes and fifos are skipped (a rootfs archive has
    no business carrying them through this path)."""
    dest = dest.resolve()
    names: list[str] = []
    for member in tar:
        name = _strip_dot_slash(member.name)
        if not name or name == ".":
            continue
        if not _member_is_safe(name):
            raise StoreError(f"archive member escapes destination: {member.name!r}")
        if member.islnk() and not _member_is_safe(_strip_dot_slash(member.linkname)):
            raise StoreError(f"hardlink escapes destination: {member.linkname!r}")
        if member.isdev() or member.isfifo():
            continue
        member = _copy_member(member, name)
        target = dest / name
        if member.issym():
            parent = _resolved_inside(dest, target.parent)
            if parent is None:
                raise StoreError(
                    f"archive member escapes destination: {member.name!r}")
            parent.mkdir(parents=True, exist_ok=True)
            final = parent / target.name
            if final.is_symlink() or final.exists():
                _remove_tree(final)
            os.symlink(member.linkname, final)
        elif member.isdir():
            resolved = _resolved_inside(dest, target)
            if resolved is None:
                raise StoreError(
                    f"archive member escapes destination: {member.name!r}")
            resolved.mkdir(parents=True, exist_ok=True)
            os.chmod(resolved, (member.mode or 0o755) | 0o700)
        elif member.isfile() or member.islnk():
            parent = _resolved_inside(dest, target.parent)
            if parent is None:
                raise StoreError(
                    f"archive member escapes destination: {member.name!r}")
            parent.mkdir(parents=True, exist_ok=True)
            final = parent / target.name
            if final.is_symlink() or final.exists():
                _remove_tree(final)
            tar.extract(member, dest, set_attrs=False)
            os.chmod(final, member.mode or 0o644)
        else:
            continue
        names.append(name)
    return names


def _copy_member(member: tarfile.TarInfo, name: str) -> tarfile.TarInfo:
    if member.name == name:
        return member
    clone = member.replace(name=name) if hasattr(member, "replace") else member
    clone.name = name
    return clone


def _remove_tree(path: Path) -> None:
    if path.is_symlink() or path.is_file():
        path.unlink()
    elif path.is_dir():
        import shutil

        shutil.rmtree(path)


def open_tar_auto(data: bytes, label: str) -> tarfile.TarFile:
    """Open a tar payload with whatever stdlib compression fits. Zstandard
    members are called out explicitly since tarfile cannot read them."""
    if data[:4] == b"\x28\xb5\x2f\xfd":
        raise ConversionError(
            f"{label} is zstd-compressed, which is not supported; "
            "repack as gzip or xz")
    try:
        return tarfile.open(fileobj=io.BytesIO(data), mode="r:*")
    except tarfile.ReadError as exc:
        raise ConversionError(f"cannot read {label}: {exc}") from exc


_AR_MAGIC = b"!<arch>\n"


def ar_members(path: Path):
    """Yield (name, data) members of a Unix ar archive (as used by .deb)."""
    blob = path.read_bytes()
    if not blob.startswith(_AR_MAGIC):
        raise ConversionError(f"{path} is not an ar archive")
    offset = len(_AR_MAGIC)
    while offset < len(blob):
        header = blob[offset:offset + 60]
        if len(header) < 60:
            raise ConversionError(f"truncated ar header in {path}")
        if header[58:60] != b"`\n":
            raise ConversionError(f"corrupt ar header in {path}")
        name = header[0:16].decode("ascii", "replace").strip()
        try:
            size = int(header[48:58].decode("ascii").strip())
        except ValueError:
            raise ConversionError(f"bad ar member size in {path}") from None
        offset += 60
        data = blob[offset:offset + size]
        if len(data) < size:
            raise ConversionError(f"truncated ar member {name!r} in {path}")
        # BSD ar pads names; GNU ar ends them with '/'.
        yield name.rstrip("/"), data
        offset += size + (size % 2)
