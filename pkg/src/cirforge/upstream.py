"""Upstream artifact sources feeding the registry's conversion pipeline.

The registry does not care where artifacts come from; it talks to an
UpstreamSource. DirectoryUpstream serves a plain directory tree::

    <root>/pypi/*.whl *.tar.gz *.zip     wheels and sdists
    <root>/apt/*.deb                     Debian binary packages
    <root>/oci/<dir>/                    image layouts (oci-layout inside)

Artifact names and versions come from file naming conventions (wheel and
sdist file names, ``name_version_arch.deb``) or, for image layouts, the
index ref annotation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol
from urllib.parse import unquote

from .errors import ConversionError
from .model import ManagerKind, canonicalize_name
from .versions import Version
from .convert.oci import REF_ANNOTATION
from .convert.wheel import parse_wheel_filename

__all__ = ["UpstreamArtifact", "UpstreamSource", "DirectoryUpstream", "NullUpstream"]


@dataclass(frozen=True)
class UpstreamArtifact:
    kind: str          # wheel | sdist | deb | oci
    path: Path
    name: str          # canonical
    version: Version


class UpstreamSource(Protocol):
    def list_versions(self, manager: ManagerKind, name: str) -> list[Version]: ...

    def artifacts(self, manager: ManagerKind, name: str,
                  version: Version) -> list[UpstreamArtifact]: ...


class NullUpstream:
    """No upstream; the registry serves only what was published into it."""

    def list_versions(self, manager, name):
        return []

    def artifacts(self, manager, name, version):
        return []


def _parse_sdist_filename(filename: str) -> tuple[str, str] | None:
    for suffix in (".tar.gz", ".zip", ".tar.bz2", ".tar.xz"):
        if filename.endswith(suffix):
            stem = filename[:-len(suffix)]
            name, sep, version = stem.rpartition("-")
            if sep and name and version and version[:1].isdigit():
                return name, version
            return None
    return None


class DirectoryUpstream:
    def __init__(self, root: Path):
        self.root = Path(root)

    # -- scanning ----------------------------------------------------------

    def _pypi_artifacts(self) -> Iterable[UpstreamArtifact]:
        base = self.root / "pypi"
        if not base.is_dir():
            return
        for path in sorted(base.iterdir()):
            if path.name.endswith(".whl"):
                try:
                    raw_name, raw_version, _tag = parse_wheel_filename(path.name)
                    yield UpstreamArtifact(
                        "wheel", path,
                        canonicalize_name(ManagerKind.PYPI, raw_name),
                        Version(ManagerKind.PYPI, raw_version))
                except Exception:
                    continue
            else:
                parsed = _parse_sdist_filename(path.name)
                if parsed is None:
                    continue
                try:
                    yield UpstreamArtifact(
                        "sdist", path,
                        canonicalize_name(ManagerKind.PYPI, parsed[0]),
                        Version(ManagerKind.PYPI, parsed[1]))
                except Exception:
                    continue

    def _apt_artifacts(self) -> Iterable[UpstreamArtifact]:
        base = self.root / "apt"
        if not base.is_dir():
            return
        for path in sorted(base.glob("*.deb")):
            pieces = path.name[:-4].split("_")
            if len(pieces) != 3:
                continue
            raw_name, raw_version, _arch = pieces
            try:
                yield UpstreamArtifact(
                    "deb", path,
                    canonicalize_name(ManagerKind.APT, raw_name),
                    Version(ManagerKind.APT, unquote(raw_version)))
            except Exception:
                continue

    def _oci_artifacts(self) -> Iterable[UpstreamArtifact]:
        base = self.root / "oci"
        if not base.is_dir():
            return
        for layout in sorted(base.iterdir()):
            if not (layout / "index.json").is_file():
                continue
            try:
                index = json.loads((layout / "index.json").read_text("utf-8"))
            except (OSError, json.JSONDecodeError):
                continue
            for descriptor in index.get("manifests", []):
                ref = descriptor.get("annotations", {}).get(REF_ANNOTATION, "")
                if not ref:
                    continue
                name, _, tag = ref.rpartition(":")
                if not name or not tag or "/" in tag:
                    continue
                try:
                    yield UpstreamArtifact(
                        "oci", layout,
                        canonicalize_name(ManagerKind.OCI, name),
                        Version(ManagerKind.OCI, tag))
                except Exception:
                    continue
                break  # one layout, one reference

    def _all(self, manager: ManagerKind) -> Iterable[UpstreamArtifact]:
        if manager is ManagerKind.PYPI:
            return self._pypi_artifacts()
        if manager is ManagerKind.APT:
            return self._apt_artifacts()
        if manager is ManagerKind.OCI:
            return self._oci_artifacts()
        return ()

    # -- interface -----------------------------------------------------------

    def list_versions(self, manager: ManagerKind, name: str) -> list[Version]:
        found: dict[str, Version] = {}
        for artifact in self._all(manager):
            if artifact.name == name:
                found.setdefault(artifact.version.canonical, artifact.version)
        return list(found.values())

    def artifacts(self, manager: ManagerKind, name: str,
                  version: Version) -> list[UpstreamArtifact]:
        return [artifact for artifact in self._all(manager)
                if artifact.name == name and artifact.version == version]
