"""Core domain model.

The shared value types the rest of the pipeline passes around: manager kinds,
component identity, dependency items, build context, spec sheets, uniform
component metadata, and the app-level CIR manifest. Everything here is an
immutable value; mutation means building a new instance.

Two textual formats live here because they are part of the model's contract:

CIR manifest (one per app)::

    [NAME] yolo11-demo
    [VERSION] 1.0
    [DEPENDENCY]
    - [Apt] libgl1 [any]
    - [PyPI] torch [>=1.8.0]
    - [LOCAL] /ultralytics [yolo11n.pt]
    [WORKDIR] /ultralytics

uniform.meta (one per component)::

    [ID] PyPI opencv-python 4.10.0.84 cp37-abi3-manylinux_2_17_x86_64
    [SIZE] 92018406
    [DIGEST] sha256:9c3e...
    [DEP] PyPI numpy >=1.26.0
    [CONTEXT] opencv.version 4.10.0.84
    [REQUIRE] python >=3.7
    [PROVIDES] module cv2
    [HINT] workdir /app
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    ContextConflictError,
    InvalidNameError,
    ManifestError,
    MetadataError,
)

__all__ = [
    "ManagerKind",
    "canonicalize_name",
    "ComponentId",
    "DependencyItem",
    "BuildContext",
    "context_merge",
    "SpecSheet",
    "ConfigHints",
    "UniformComponentMeta",
    "serialize_meta",
    "parse_meta",
    "CirManifest",
    "parse_manifest",
]


class ManagerKind(Enum):
    """Package ecosystem a component or dependency belongs to."""

    APT = "Apt"
    PYPI = "PyPI"
    OCI = "OciImage"
    LOCAL = "Local"

    @classmethod
    def parse(cls, tag: str) -> "ManagerKind":
        normalized = tag.strip().lower()
        aliases = {
            "apt": cls.APT,
            "deb": cls.APT,
            "pypi": cls.PYPI,
            "pip": cls.PYPI,
            "ociimage": cls.OCI,
            "oci": cls.OCI,
            "local": cls.LOCAL,
        }
        try:
            return aliases[normalized]
        except KeyError:
            raise MetadataError(f"unknown package manager tag {tag!r}") from None

    @property
    def path_tag(self) -> str:
        """Short lowercase tag used in store paths and registry URLs."""
        return {
            ManagerKind.APT: "apt",
            ManagerKind.PYPI: "pypi",
            ManagerKind.OCI: "oci",
            ManagerKind.LOCAL: "local",
        }[self]


_PYPI_NAME_RE = re.compile(r"^[A-Za-z0-9]([A-Za-z0-9._-]*[A-Za-z0-9])?$")
_APT_NAME_RE = re.compile(r"^[a-z0-9][a-z0-9+.-]*$")


def canonicalize_name(manager: ManagerKind, name: str) -> str:
    """Return the canonical form of a package name for its ecosystem.

    PyPI collapses runs of ``-_.`` to ``-`` and lowercases; Apt lowercases;
    OCI references gain the default registry/namespace (``python`` becomes
    ``docker.io/library/python``); Local names pass through. Idempotent by
    construction, which DependencyItem and ComponentId rely on.
    """
    name = name.strip()
    if not name:
        raise InvalidNameError("package name is empty")
    if any(ch.isspace() for ch in name):
        raise InvalidNameError(f"package name contains whitespace: {name!r}")
    if manager is ManagerKind.PYPI:
        if not _PYPI_NAME_RE.match(name):
            raise InvalidNameError(f"not a valid PyPI package name: {name!r}")
        return re.sub(r"[-_.]+", "-", name).lower()
    if manager is ManagerKind.APT:
        lowered = name.lower()
        if not _APT_NAME_RE.match(lowered):
            raise InvalidNameError(f"not a valid Apt package name: {name!r}")
        return lowered
    if manager is ManagerKind.OCI:
        return _expand_oci_name(name)
    return name


def _expand_oci_name(name: str) -> str:
    if name.startswith("/") or name.endswith("/") or "//" in name:
        raise InvalidNameError(f"not a valid image reference: {name!r}")
    parts = name.split("/")
    first = parts[0]
    # A leading component is a registry host only if it looks like one.
    is_host = "." in first or ":" in first or first == "localhost"
    if len(parts) == 1:
        return f"docker.io/library/{name}"
    if not is_host:
        return f"docker.io/{name}"
    return name


@dataclass(frozen=True, order=True)
class ComponentId:
    """Identity quadruple of a uniform component.

    Two components with equal quadruples are interchangeable; the store and
    registry enforce that by refusing to rebind an id to different bytes.
    The version is kept as its canonical string; parse it with
    versions.parse_version when ordering is needed.
    """

    manager: ManagerKind
    name: str
    version: str
    environment: str

    def __post_init__(self):
        object.__setattr__(self, "name", canonicalize_name(self.manager, self.name))
        if not self.version:
            raise MetadataError("component version is empty")
        if not self.environment:
            raise MetadataError("component environment tag is empty")

    def __str__(self) -> str:
        return f"{self.manager.value}/{self.name}/{self.version}/{self.environment}"

    @property
    def package(self) -> tuple[ManagerKind, str]:
        return (self.manager, self.name)


@dataclass(frozen=True)
class DependencyItem:
    """One declared dependency: ecosystem, canonical name, specifier.

    The specifier must parse under the manager's grammar or construction
    fails, so an item that exists is always resolvable syntax-wise.
    """

    manager: ManagerKind
    name: str
    specifier: str

    def __post_init__(self):
        object.__setattr__(self, "name", canonicalize_name(self.manager, self.name))
        spec = self.specifier.strip()
        if not spec:
            spec = "any"
        object.__setattr__(self, "specifier", spec)
        # Deferred import; versions.py needs ManagerKind from this module.
        from . import versions

        versions.parse_specifier(self.manager, spec)

    def __str__(self) -> str:
        return f"[{self.manager.value}] {self.name} [{self.specifier}]"

    @property
    def package(self) -> tuple[ManagerKind, str]:
        return (self.manager, self.name)


_KEY_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


@dataclass(frozen=True)
class BuildContext:
    """Accumulated build facts: unique string keys to string values.

    Kept sorted by key so serialization and iteration are deterministic.
    Inserting an existing key with a different value is a conflict, never a
    silent override; that rule is what makes resolution order-insensitive.
    """

    entries: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        items = sorted(self.entries)
        seen: dict[str, str] = {}
        for key, value in items:
            if not _KEY_RE.match(key):
                raise MetadataError(f"bad context key {key!r}")
            if key in seen and seen[key] != value:
                raise ContextConflictError(key, seen[key], value)
            seen[key] = value
        object.__setattr__(self, "entries", tuple(sorted(seen.items())))

    @classmethod
    def from_mapping(cls, mapping) -> "BuildContext":
        return cls(tuple((str(k), str(v)) for k, v in mapping.items()))

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.entries:
            if k == key:
                return v
        return default

    def __contains__(self, key: str) -> bool:
        return self.get(key) is not None

    def as_dict(self) -> dict[str, str]:
        return dict(self.entries)

    def set(self, key: str, value: str) -> "BuildContext":
        """Return a context with (key, value) added; conflict on mismatch."""
        current = self.get(key)
        if current is not None and current != value:
            raise ContextConflictError(key, current, value)
        return BuildContext(self.entries + ((key, value),))

    def serialize(self) -> str:
        return "".join(f"{k} {v}\n" for k, v in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def context_merge(base: BuildContext, extra: BuildContext) -> BuildContext:
    """Union of two contexts; same key with different values is a conflict."""
    merged = base
    for key, value in extra.entries:
        merged = merged.set(key, value)
    return merged


# Keys every spec sheet carries. Extra facts (gpu, gpu.driver, ...) ride in
# SpecSheet.extra and merge into the same context namespace.
SHEET_CPU = "cpu"
SHEET_OS = "os"
SHEET_PYTHON = "python"
SHEET_LIBC = "libc"


@dataclass(frozen=True)
class SpecSheet:
    """Target platform description used for environment selection.

    cpu and os are required; python and libc may be empty when the target
    offers none (a component can still supply them through build context).
    """

    cpu: str
    os: str
    python: str = ""
    libc: str = ""
    extra: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.cpu or not self.os:
            raise MetadataError("spec sheet needs non-empty cpu and os")
        object.__setattr__(self, "extra", tuple(sorted(self.extra)))

    def as_dict(self) -> dict[str, str]:
        base = {SHEET_CPU: self.cpu, SHEET_OS: self.os}
        if self.python:
            base[SHEET_PYTHON] = self.python
        if self.libc:
            base[SHEET_LIBC] = self.libc
        for key, value in self.extra:
            base.setdefault(key, value)
        return base

    def to_context(self) -> BuildContext:
        return BuildContext.from_mapping(self.as_dict())

    @classmethod
    def from_mapping(cls, mapping) -> "SpecSheet":
        data = {str(k): str(v) for k, v in mapping.items()}
        cpu = data.pop(SHEET_CPU, "")
        os_type = data.pop(SHEET_OS, "")
        python = data.pop(SHEET_PYTHON, "")
        libc = data.pop(SHEET_LIBC, "")
        return cls(cpu=cpu, os=os_type, python=python, libc=libc,
                   extra=tuple(sorted(data.items())))

    def serialize(self) -> str:
        return "".join(f"{k} {v}\n" for k, v in sorted(self.as_dict().items()))


@dataclass(frozen=True)
class ConfigHints:
    """Runtime configuration carried by base-image components."""

    user: str = ""
    workdir: str = ""
    env: tuple[str, ...] = ()
    entrypoint: tuple[str, ...] = ()
    cmd: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.user or self.workdir or self.env
                    or self.entrypoint or self.cmd)


@dataclass(frozen=True)
class UniformComponentMeta:
    """Metadata document of one uniform component.

    payload_digest is the bare sha256 hex of the payload archive;
    payload_size its byte length. Both are zero/empty in the copy embedded
    inside the archive itself (they describe the archive, so the embedded
    copy cannot carry them) and filled in the registry/store index copy.
    """

    id: ComponentId
    deps: tuple[DependencyItem, ...] = ()
    context: BuildContext = field(default_factory=BuildContext)
    requirements: tuple[tuple[str, str], ...] = ()
    payload_digest: str = ""
    payload_size: int = 0
    provides: tuple[tuple[str, str], ...] = ()
    hints: ConfigHints = field(default_factory=ConfigHints)

    def __post_init__(self):
        object.__setattr__(self, "requirements", tuple(self.requirements))
        object.__setattr__(self, "provides", tuple(self.provides))
        for key, constraint in self.requirements:
            if not _KEY_RE.match(key):
                raise MetadataError(f"bad requirement key {key!r}")
            if not constraint.strip():
                raise MetadataError(f"empty requirement constraint for {key!r}")
        if self.payload_digest and not re.fullmatch(r"[0-9a-f]{64}", self.payload_digest):
            raise MetadataError(f"bad payload digest {self.payload_digest!r}")

    def with_payload(self, digest: str, size: int) -> "UniformComponentMeta":
        return UniformComponentMeta(
            id=self.id, deps=self.deps, context=self.context,
            requirements=self.requirements, payload_digest=digest,
            payload_size=size, provides=self.provides, hints=self.hints,
        )


def serialize_meta(meta: UniformComponentMeta, include_payload: bool = True) -> str:
    """Render a uniform.meta document. Field order is fixed; list sections
    keep declaration order for deps and sort everything else."""
    cid = meta.id
    lines = [f"[ID] {cid.manager.value} {cid.name} {cid.version} {cid.environment}"]
    if include_payload and meta.payload_digest:
        lines.append(f"[SIZE] {meta.payload_size}")
        lines.append(f"[DIGEST] sha256:{meta.payload_digest}")
    for dep in meta.deps:
        lines.append(f"[DEP] {dep.manager.value} {dep.name} {dep.specifier}")
    for key, value in meta.context.entries:
        lines.append(f"[CONTEXT] {key} {value}")
    for key, constraint in sorted(meta.requirements):
        lines.append(f"[REQUIRE] {key} {constraint}")
    for kind, value in sorted(meta.provides):
        lines.append(f"[PROVIDES] {kind} {value}")
    hints = meta.hints
    if hints.user:
        lines.append(f"[HINT] user {hints.user}")
    if hints.workdir:
        lines.append(f"[HINT] workdir {hints.workdir}")
    lines.extend(f"[HINT] env {entry}" for entry in hints.env)
    lines.extend(f"[HINT] entrypoint {entry}" for entry in hints.entrypoint)
    lines.extend(f"[HINT] cmd {entry}" for entry in hints.cmd)
    return "\n".join(lines) + "\n"


def _split_fields(line: str, tag: str, count: int) -> list[str]:
    """Split a body into count fields; the last field absorbs any spaces."""
    body = line[len(tag):].strip()
    parts = body.split(None, count - 1) if count > 1 else [body]
    if len(parts) != count or not all(parts):
        raise MetadataError(f"malformed {tag} line: {line!r}")
    return parts


def parse_meta(text: str) -> UniformComponentMeta:
    cid: ComponentId | None = None
    size = 0
    digest = ""
    deps: list[DependencyItem] = []
    context_pairs: list[tuple[str, str]] = []
    requirements: list[tuple[str, str]] = []
    provides: list[tuple[str, str]] = []
    hint_fields: dict[str, list[str]] = {"env": [], "entrypoint": [], "cmd": []}
    user = workdir = ""

    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[ID]"):
            manager_tag, name, version, env = _split_fields(line, "[ID]", 4)
            cid = ComponentId(ManagerKind.parse(manager_tag), name, version, env)
        elif line.startswith("[SIZE]"):
            (raw,) = _split_fields(line, "[SIZE]", 1)
            try:
                size = int(raw)
            except ValueError:
                raise MetadataError(f"bad size {raw!r}") from None
            if size < 0:
                raise MetadataError(f"bad size {raw!r}")
        elif line.startswith("[DIGEST]"):
            (raw,) = _split_fields(line, "[DIGEST]", 1)
            if not raw.startswith("sha256:"):
                raise MetadataError(f"unsupported digest {raw!r}")
            digest = raw[len("sha256:"):]
        elif line.startswith("[DEP]"):
            manager_tag, name, spec = _split_fields(line, "[DEP]", 3)
            deps.append(DependencyItem(ManagerKind.parse(manager_tag), name, spec))
        elif line.startswith("[CONTEXT]"):
            key, value = _split_fields(line, "[CONTEXT]", 2)
            context_pairs.append((key, value))
        elif line.startswith("[REQUIRE]"):
            key, constraint = _split_fields(line, "[REQUIRE]", 2)
            requirements.append((key, constraint))
        elif line.startswith("[PROVIDES]"):
            kind, value = _split_fields(line, "[PROVIDES]", 2)
            provides.append((kind, value))
        elif line.startswith("[HINT]"):
            kind, value = _split_fields(line, "[HINT]", 2)
            if kind == "user":
                user = value
            elif kind == "workdir":
                workdir = value
            elif kind in hint_fields:
                hint_fields[kind].append(value)
            else:
                raise MetadataError(f"unknown hint kind {kind!r}")
        else:
            raise MetadataError(f"unknown metadata line: {line!r}")

    if cid is None:
        raise MetadataError("metadata document has no [ID] line")
    return UniformComponentMeta(
        id=cid,
        deps=tuple(deps),
        context=BuildContext(tuple(context_pairs)),
        requirements=tuple(requirements),
        payload_digest=digest,
        payload_size=size,
        provides=tuple(provides),
        hints=ConfigHints(
            user=user,
            workdir=workdir,
            env=tuple(hint_fields["env"]),
            entrypoint=tuple(hint_fields["entrypoint"]),
            cmd=tuple(hint_fields["cmd"]),
        ),
    )


_DEP_LINE_RE = re.compile(r"^- \[(?P<tag>[A-Za-z]+)\] (?P<rest>.+)$")


@dataclass(frozen=True)
class CirManifest:
    """App-level manifest: name, version, direct dependencies, local payload
    mounts, and the runtime working directory."""

    name: str
    version: str
    dependencies: tuple[DependencyItem, ...] = ()
    local_payloads: tuple[tuple[str, str], ...] = ()
    workdir: str = "/"

    def __post_init__(self):
        if not self.name or any(ch.isspace() for ch in self.name):
            raise ManifestError(f"bad app name {self.name!r}")
        if not self.version or any(ch.isspace() for ch in self.version):
            raise ManifestError(f"bad app version {self.version!r}")
        if not self.workdir.startswith("/"):
            raise ManifestError(f"workdir must be absolute: {self.workdir!r}")
        for mount, filename in self.local_payloads:
            if not mount.startswith("/"):
                raise ManifestError(f"local mount must be absolute: {mount!r}")
            if not filename or "/" in filename or filename in (".", ".."):
                raise ManifestError(f"bad local payload file name {filename!r}")

    def serialize(self) -> str:
        lines = [f"[NAME] {self.name}", f"[VERSION] {self.version}", "[DEPENDENCY]"]
        for dep in self.dependencies:
            lines.append(f"- [{dep.manager.value}] {dep.name} [{dep.specifier}]")
        for mount, filename in self.local_payloads:
            lines.append(f"- [LOCAL] {mount} [{filename}]")
        lines.append(f"[WORKDIR] {self.workdir}")
        return "\n".join(lines) + "\n"


def _parse_bracketed_tail(rest: str, line: str) -> tuple[str, str]:
    """Split 'name [specifier]' where the specifier may contain spaces."""
    if not rest.endswith("]") or " [" not in rest:
        raise ManifestError(f"malformed dependency line: {line!r}")
    head, _, bracket = rest.rpartition(" [")
    if not head:
        raise ManifestError(f"malformed dependency line: {line!r}")
    return head, bracket[:-1]


def parse_manifest(text: str) -> CirManifest:
    name = version = ""
    workdir = "/"
    deps: list[DependencyItem] = []
    locals_: list[tuple[str, str]] = []
    in_deps = False
    saw_deps_section = False

    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[NAME]"):
            (name,) = _split_fields(line, "[NAME]", 1)
            in_deps = False
        elif line.startswith("[VERSION]"):
            (version,) = _split_fields(line, "[VERSION]", 1)
            in_deps = False
        elif line == "[DEPENDENCY]":
            in_deps = True
            saw_deps_section = True
        elif line.startswith("[WORKDIR]"):
            (workdir,) = _split_fields(line, "[WORKDIR]", 1)
            in_deps = False
        elif line.startswith("- "):
            if not in_deps:
                raise ManifestError(f"dependency line outside [DEPENDENCY]: {line!r}")
            match = _DEP_LINE_RE.match(line)
            if not match:
                raise ManifestError(f"malformed dependency line: {line!r}")
            tag = match.group("tag")
            first, bracket = _parse_bracketed_tail(match.group("rest"), line)
            if tag.upper() == "LOCAL" and first.startswith("/"):
                locals_.append((first, bracket))
            else:
                deps.append(DependencyItem(ManagerKind.parse(tag), first, bracket))
        else:
            raise ManifestError(f"unknown manifest line: {line!r}")

    if not name:
        raise ManifestError("manifest has no [NAME]")
    if not version:
        raise ManifestError("manifest has no [VERSION]")
    if not saw_deps_section:
        raise ManifestError("manifest has no [DEPENDENCY] section")
    return CirManifest(
        name=name, version=version, dependencies=tuple(deps),
        local_payloads=tuple(locals_), workdir=workdir,
    )
