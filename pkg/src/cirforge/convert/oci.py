"""OCI image layout to uniform component conversion.

Input is an image layout directory (oci-layout, index.json, blobs/) or a
tar of one. Every platform manifest in the index becomes its own
component: layers are applied in order with whiteout semantics (`.wh.x`
removes x from lower layers, `.wh..wh..opq` empties a directory of lower
content), each referenced blob is digest-verified before use, and the
image config contributes runtime hints (User, WorkingDir, Env, Entrypoint,
Cmd). The flattened tree becomes the payload.
"""

from __future__ import annotations

import hashlib
import io
import json
import shutil
import tarfile
import tempfile
from pathlib import Path

from ..archive import Entry, safe_extract, tar_dir_entries
from ..environment import oci_env_tag, oci_platform_requirements
from ..errors import ConversionError, DigestMismatchError
from ..model import (
    BuildContext,
    ComponentId,
    ConfigHints,
    ManagerKind,
    UniformComponentMeta,
    canonicalize_name,
)
from ..versions import Version
from . import ConversionReport, ConvertedComponent, ROOTFS_PREFIX, build_component
from .xdeps import XDeps

__all__ = ["convert_oci"]

REF_ANNOTATION = "org.opencontainers.image.ref.name"


def _load_layout(path: Path, scratch: Path) -> Path:
    path = Path(path)
    if path.is_dir():
        return path
    extracted = scratch / "layout"
    extracted.mkdir()
    with tarfile.open(path) as tar:
        safe_extract(tar, extracted)
    entries = list(extracted.iterdir())
    if len(entries) == 1 and entries[0].is_dir():
        return entries[0]
    return extracted


def _read_blob(layout: Path, digest: str, label: str) -> bytes:
    algo, _, hexed = digest.partition(":")
    blob = layout / "blobs" / algo / hexed
    if algo != "sha256":
        raise ConversionError(f"{label}: unsupported digest algorithm {algo!r}")
    try:
        data = blob.read_bytes()
    except FileNotFoundError:
        raise ConversionError(f"{label}: missing blob {digest}") from None
    actual = hashlib.sha256(data).hexdigest()
    if actual != hexed:
        raise DigestMismatchError(digest, f"sha256:{actual}", what=label)
    return data


def _split_ref(ref: str) -> tuple[str, str]:
    """'python:3.12-slim' or 'docker.io/library/python:3.12' -> (name, tag)."""
    head, sep, tail = ref.rpartition(":")
    if sep and "/" not in tail:
        return head, tail
    return ref, ""


def _whiteouts_then_extract(layer_tar: tarfile.TarFile, tree: Path,
                            report: ConversionReport) -> None:
    members = layer_tar.getmembers()
    survivors = []
    for member in members:
        name = member.name.lstrip("./").strip("/")
        if not name:
            continue
        base = name.rsplit("/", 1)[-1]
        parent = name.rsplit("/", 1)[0] if "/" in name else ""
        if base == ".wh..wh..opq":
            target = tree / parent if parent else tree
            if target.is_dir():
                for child in target.iterdir():
                    _remove_path(child)
        elif base.startswith(".wh."):
            victim = (tree / parent / base[len(".wh."):]) if parent else (tree / base[len(".wh."):])
            if victim.exists() or victim.is_symlink():
                _remove_path(victim)
            else:
                report.warn(f"whiteout for absent path {name!r}")
        else:
            survivors.append(member)

    class _Filtered:
        """Iterate chosen members while delegating extraction to the tar."""

        def __iter__(self):
            return iter(survivors)

        def __getattr__(self, attr):
            return getattr(layer_tar, attr)

    safe_extract(_Filtered(), tree)


def _remove_path(path: Path) -> None:
    if path.is_dir() and not path.is_symlink():
        shutil.rmtree(path)
    else:
        path.unlink(missing_ok=True)


def _layer_tarfile(media_type: str, data: bytes, label: str) -> tarfile.TarFile:
    if media_type.endswith("+zstd") or data[:4] == b"\x28\xb5\x2f\xfd":
        raise ConversionError(f"{label}: zstd layers are not supported")
    try:
        return tarfile.open(fileobj=io.BytesIO(data), mode="r:*")
    except tarfile.ReadError as exc:
        raise ConversionError(f"{label}: unreadable layer: {exc}") from exc


def convert_oci(path: Path, out_dir: Path, name: str = "", version: str = "",
                xdeps: XDeps | None = None) -> list[ConvertedComponent]:
    """Convert every platform of an image layout; returns one component per
    platform manifest."""
    with tempfile.TemporaryDirectory(prefix="oci-convert-") as scratch_str:
        scratch = Path(scratch_str)
        layout = _load_layout(path, scratch)
        if not (layout / "oci-layout").is_file():
            raise ConversionError(f"{path} is not an image layout (no oci-layout)")
        try:
            index = json.loads((layout / "index.json").read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConversionError(f"{path}: unreadable index.json: {exc}") from exc

        ref_name, ref_tag = "", ""
        descriptors = []
        for descriptor in index.get("manifests", []):
            annotations = descriptor.get("annotations", {})
            if REF_ANNOTATION in annotations and not ref_name:
                ref_name, ref_tag = _split_ref(annotations[REF_ANNOTATION])
            descriptors.append(descriptor)
        if not descriptors:
            raise ConversionError(f"{path}: index lists no manifests")

        image_name = name or ref_name
        image_version = version or ref_tag
        if not image_name:
            raise ConversionError(
                f"{path}: no image name; pass one explicitly or annotate the index")
        if not image_version:
            raise ConversionError(
                f"{path}: no image tag; pass a version explicitly")
        image_name = canonicalize_name(ManagerKind.OCI, image_name)
        parsed_version = Version(ManagerKind.OCI, image_version)

        # An index may point at nested indexes (multi-arch) or directly at
        # image manifests.
        manifest_entries: list[tuple[dict, dict]] = []  # (descriptor, manifest)
        for descriptor in descriptors:
            data = _read_blob(layout, descriptor["digest"],
                              f"{path} manifest {descriptor['digest']}")
            document = json.loads(data)
            if "manifests" in document:  # nested index
                for nested in document["manifests"]:
                    nested_data = _read_blob(layout, nested["digest"],
                                             f"{path} manifest {nested['digest']}")
                    manifest_entries.append((nested, json.loads(nested_data)))
            else:
                manifest_entries.append((descriptor, document))

        components: list[ConvertedComponent] = []
        for descriptor, manifest in manifest_entries:
            platform = descriptor.get("platform", {})
            if platform.get("os") == "unknown":
                continue  # attestation manifests carry no filesystem
            report = ConversionReport()
            config_descriptor = manifest.get("config", {})
            config_blob = _read_blob(layout, config_descriptor["digest"],
                                     f"{path} config")
            config = json.loads(config_blob)
            os_type = platform.get("os") or config.get("os") or "linux"
            arch = platform.get("architecture") or config.get("architecture") or ""
            if not arch:
                raise ConversionError(f"{path}: platform has no architecture")
            platform_ref = f"{os_type}/{arch}"

            tree = scratch / f"tree-{len(components)}"
            tree.mkdir()
            for layer in manifest.get("layers", []):
                media_type = layer.get("mediaType", "")
                blob = _read_blob(layout, layer["digest"],
                                  f"{path} layer {layer['digest']}")
                with _layer_tarfile(media_type, blob,
                                    f"{path} layer {layer['digest']}") as layer_tar:
                    _whiteouts_then_extract(layer_tar, tree, report)
                report.act(f"applied layer {layer['digest'][:19]} "
                           f"({len(blob)} bytes)")

            raw_config = config.get("config", {})
            hints = ConfigHints(
                user=raw_config.get("User") or "",
                workdir=raw_config.get("WorkingDir") or "",
                env=tuple(raw_config.get("Env") or ()),
                entrypoint=tuple(raw_config.get("Entrypoint") or ()),
                cmd=tuple(raw_config.get("Cmd") or ()),
            )

            extra_deps, context_pairs = [], []
            if xdeps is not None:
                extra_deps, context_pairs = xdeps.for_component(
                    ManagerKind.OCI, image_name, parsed_version)
                for dep in extra_deps:
                    report.act(f"injected cross-manager dependency {dep}")

            entries: list[Entry] = tar_dir_entries(tree, prefix=ROOTFS_PREFIX)
            meta = UniformComponentMeta(
                id=ComponentId(ManagerKind.OCI, image_name,
                               parsed_version.canonical, oci_env_tag(platform_ref)),
                deps=tuple(extra_deps),
                context=BuildContext(tuple(context_pairs)),
                requirements=oci_platform_requirements(platform_ref),
                hints=hints,
            )
            components.append(build_component(meta, entries, out_dir, report))
        if not components:
            raise ConversionError(f"{path}: no platform manifests usable")
        return components
