"""Converters: upstream artifacts in, uniform components out.

Every converter normalizes one upstream format (wheel, deb, OCI image
layout, sdist) into the same shape: a deterministic tar.gz payload with an
embedded uniform.meta, plus the index metadata describing it. Identical
upstream input always yields identical payload bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..archive import Entry, write_deterministic_tgz
from ..model import UniformComponentMeta, serialize_meta
from .xdeps import XDeps

__all__ = [
    "ConvertedComponent",
    "ConversionReport",
    "build_component",
    "XDeps",
    "convert_wheel",
    "convert_deb",
    "convert_oci",
    "convert_sdist",
]

META_MEMBER = "uniform.meta"
ROOTFS_PREFIX = "rootfs/"
FRAGMENT_PREFIX = "fragments/"


@dataclass
class ConversionReport:
    """What a conversion did and what it had to skip or approximate."""

    actions: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    dropped_deps: list[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        if message not in self.warnings:
            self.warnings.append(message)

    def act(self, message: str) -> None:
        self.actions.append(message)


@dataclass
class ConvertedComponent:
    meta: UniformComponentMeta          # payload digest and size filled in
    payload_path: Path
    report: ConversionReport


def build_component(meta: UniformComponentMeta, entries: list[Entry],
                    out_dir: Path, report: ConversionReport,
                    compresslevel: int = 6) -> ConvertedComponent:
    """Pack payload entries plus the embedded metadata copy and fill in the
    digest/size fields. The payload file is named by its own digest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    embedded = serialize_meta(meta, include_payload=False).encode("utf-8")
    all_entries = list(entries) + [Entry(META_MEMBER, "file", 0o644, data=embedded)]
    import uuid

    staging = out_dir / f".packing-{uuid.uuid4().hex}.tgz"
    digest = write_deterministic_tgz(staging, all_entries, compresslevel=compresslevel)
    final = out_dir / f"{digest}.tgz"
    if final.exists():
        staging.unlink()
    else:
        staging.replace(final)
    size = final.stat().st_size
    return ConvertedComponent(meta.with_payload(digest, size), final, report)


from .deb import convert_deb  # noqa: E402
from .oci import convert_oci  # noqa: E402
from .sdist import convert_sdist  # noqa: E402
from .wheel import convert_wheel  # noqa: E402
