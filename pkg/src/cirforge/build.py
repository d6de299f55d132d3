"""Deployment-side build: CIR in, runnable root filesystem out.

lazy_build unpacks a CIR, resolves its declared items against a registry,
fetches missing payloads in parallel while resolution continues, assembles
the selected components into a rootfs by overlay ordering, emits an OCI
runtime spec, and records everything in a lock file. build_from_lock
replays a lock byte-for-byte with no selection logic at all.

Overlay semantics are realized privilege-free: layers materialize into a
plain directory in plan order (hardlink from the extraction cache where
possible), later tiers override earlier ones, and a deterministic manifest
of the result makes byte-identity testable. Tier order is OCI base images,
then system packages, then Python packages, then the CIR's own files.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .archive import sha256_file
from .errors import (
    AssemblyError,
    DigestMismatchError,
    LockFileError,
    NotFoundError,
)
from .model import (
    BuildContext,
    CirManifest,
    ComponentId,
    ConfigHints,
    ManagerKind,
    SpecSheet,
    UniformComponentMeta,
)
from .prebuild import read_cir
from .resolver import ResolutionResult, StoreOnlyClient, resolve
from .store import LocalStore
from .versions import Version, matches, parse_specifier, sort_versions

__all__ = [
    "LockFile",
    "AssemblyLayer",
    "AssemblyPlan",
    "BuildResult",
    "lazy_build",
    "build_from_lock",
    "make_plan",
    "assemble",
    "emit_runtime_spec",
    "active_share",
]

LOCK_FORMAT = 1
SITE_PACKAGES = "usr/lib/python3/site-packages"
_TIER = {ManagerKind.OCI: 0, ManagerKind.APT: 1, ManagerKind.PYPI: 2,
         ManagerKind.LOCAL: 3}


# ----------------------------------------------------------------------------
# Lock file

@dataclass(frozen=True)
class LockFile:
    """Reproducibility record: what was selected for which CIR on which
    platform, pinned by digest, in resolution order."""

    name: str
    version: str
    sheet: tuple[tuple[str, str], ...]          # sorted key/value snapshot
    components: tuple[tuple[ComponentId, str], ...]
    context: tuple[tuple[str, str], ...]        # sorted final build context
    format_version: int = LOCK_FORMAT

    def serialize(self) -> str:
        lines = [f"[FORMAT] {self.format_version}",
                 f"[CIR] {self.name} {self.version}",
                 "[SPECSHEET]"]
        lines.extend(f"{key} {value}" for key, value in self.sheet)
        lines.append("[COMPONENT]")
        for cid, digest in self.components:
            lines.append(f"{cid.manager.value} {cid.name} {cid.version} "
                         f"{cid.environment} sha256:{digest}")
        lines.append("[CONTEXT]")
        lines.extend(f"{key} {value}" for key, value in self.context)
        return "\n".join(lines) + "\n"


def parse_lock(text: str) -> LockFile:
    name = version = ""
    fmt = None
    sheet: list[tuple[str, str]] = []
    components: list[tuple[ComponentId, str]] = []
    context: list[tuple[str, str]] = []
    section = ""
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[FORMAT]"):
            try:
                fmt = int(line.split(None, 1)[1])
            except (IndexError, ValueError):
                raise LockFileError(f"bad format line: {line!r}")
            section = ""
        elif line.startswith("[CIR]"):
            parts = line.split()
            if len(parts) != 3:
                raise LockFileError(f"bad CIR line: {line!r}")
            name, version = parts[1], parts[2]
            section = ""
        elif line in ("[SPECSHEET]", "[COMPONENT]", "[CONTEXT]"):
            section = line
        elif section == "[SPECSHEET]":
            key, _, value = line.partition(" ")
            sheet.append((key, value))
        elif section == "[COMPONENT]":
            parts = line.split()
            if len(parts) != 5 or not parts[4].startswith("sha256:"):
                raise LockFileError(f"bad component line: {line!r}")
            cid = ComponentId(ManagerKind.parse(parts[0]), parts[1],
                              parts[2], parts[3])
            components.append((cid, parts[4][len("sha256:"):]))
        elif section == "[CONTEXT]":
            key, _, value = line.partition(" ")
            context.append((key, value))
        else:
            raise LockFileError(f"unexpected lock line: {line!r}")
    if fmt is None:
        raise LockFileError("lock file has no [FORMAT] header")
    if fmt != LOCK_FORMAT:
        raise LockFileError(f"unsupported lock format {fmt}")
    if not name:
        raise LockFileError("lock file has no [CIR] line")
    return LockFile(name=name, version=version, sheet=tuple(sheet),
                    components=tuple(components), context=tuple(context),
                    format_version=fmt)


def _lock_from_resolution(manifest: CirManifest, sheet: SpecSheet,
                          result: ResolutionResult) -> LockFile:
    return LockFile(
        name=manifest.name,
        version=manifest.version,
        sheet=tuple(sorted(sheet.as_dict().items())),
        components=tuple((meta.id, meta.payload_digest)
                         for meta in result.components),
        context=tuple(result.context.entries),
    )


# ----------------------------------------------------------------------------
# Assembly plan

@dataclass(frozen=True)
class AssemblyLayer:
    label: str                                   # human-readable layer name
    tier: int
    meta: UniformComponentMeta | None = None     # None for the local layer


@dataclass(frozen=True)
class AssemblyPlan:
    layers: tuple[AssemblyLayer, ...]
    local_payloads: tuple[tuple[str, str], ...]  # (mount path, file name)

    def mount_plan(self) -> str:
        """lowerdir ordering for an external overlay runtime: first line is
        the lowest layer."""
        return "".join(f"{layer.label}\n" for layer in self.layers)


def _topo_tier(metas: list[UniformComponentMeta]) -> list[UniformComponentMeta]:
    """Dependency-topological order inside one tier: a component precedes
    its dependents; ties broken by component id text."""
    by_pkg = {(m.id.manager, m.id.name): m for m in metas}
    needs: dict[str, set[str]] = {str(m.id): set() for m in metas}
    for meta in metas:
        for dep in meta.deps:
            target = by_pkg.get((dep.manager, dep.name))
            if target is not None and target is not meta:
                needs[str(meta.id)].add(str(target.id))
    by_id = {str(m.id): m for m in metas}
    ordered: list[UniformComponentMeta] = []
    placed: set[str] = set()
    while len(ordered) < len(metas):
        ready = sorted(key for key, deps in needs.items()
                       if key not in placed and deps <= placed)
        if not ready:  # dependency cycle: fall back to id order
            ready = sorted(key for key in needs if key not in placed)
        placed.add(ready[0])
        ordered.append(by_id[ready[0]])
    return ordered


def make_plan(components, manifest: CirManifest) -> AssemblyPlan:
    tiers: dict[int, list[UniformComponentMeta]] = {0: [], 1: [], 2: [], 3: []}
    for meta in components:
        tiers[_TIER[meta.id.manager]].append(meta)
    layers = [AssemblyLayer(str(meta.id), tier, meta)
              for tier in (0, 1, 2, 3)
              for meta in _topo_tier(tiers[tier])]
    if manifest.local_payloads:
        layers.append(AssemblyLayer("cir local payloads", 4, None))
    return AssemblyPlan(layers=tuple(layers),
                        local_payloads=manifest.local_payloads)


# ----------------------------------------------------------------------------
# Assembly

@dataclass
class _PathState:
    kind: str           # file | dir | symlink
    mode: int
    digest: str         # content digest for files, target for symlinks
    layer: str
    tier: int


def _link_or_copy(src: Path, dst: Path) -> None:
    try:
        os.link(src, dst)
    except OSError:
        shutil.copyfile(src, dst)
        shutil.copymode(src, dst)


def _apply_tree(source_root: Path, target: Path, layer: AssemblyLayer,
                state: dict[str, _PathState]) -> None:
    for path in sorted(source_root.rglob("*")):
        rel = path.relative_to(source_root).as_posix()
        dest = target / rel
        if path.is_symlink():
            kind, mode, digest = "symlink", 0o777, os.readlink(path)
        elif path.is_dir():
            kind, mode, digest = "dir", path.stat().st_mode & 0o7777, ""
        elif path.is_file():
            kind = "file"
            mode = path.stat().st_mode & 0o7777
            digest = sha256_file(path)
        else:
            continue
        existing = state.get(rel)
        if existing is not None:
            if existing.kind == "dir" and kind == "dir":
                if layer.tier >= existing.tier:
                    os.chmod(dest, mode)
                    state[rel] = _PathState(kind, mode, digest, layer.label,
                                            layer.tier)
                continue
            if existing.kind == "symlink" and kind == "dir":
                # A directory entry over a lower-layer symlink merges
                # through the link, matching what path lookup would do.
                continue
            if existing.kind == "dir" and kind == "symlink" \
                    and layer.tier > existing.tier:
                shutil.rmtree(dest)
                for sub in [k for k in state if k.startswith(rel + "/")]:
                    del state[sub]
                os.symlink(digest, dest)
                state[rel] = _PathState(kind, mode, digest, layer.label,
                                        layer.tier)
                continue
            if existing.kind == "dir" or kind == "dir":
                raise AssemblyError(
                    f"/{rel} is a {existing.kind} in layer "
                    f"'{existing.layer}' but a {kind} in layer "
                    f"'{layer.label}'")
            if existing.tier == layer.tier:
                if (existing.kind, existing.digest) != (kind, digest):
                    raise AssemblyError(
                        f"/{rel} differs between same-tier layers "
                        f"'{existing.layer}' and '{layer.label}'")
                continue
            dest.unlink()
        if kind == "dir":
            dest.mkdir(mode=0o755)
            os.chmod(dest, mode)
        elif kind == "symlink":
            # unlink guards against an untracked physical file left by a
            # lower layer whose path merged through a directory symlink
            dest.unlink(missing_ok=True)
            os.symlink(digest, dest)
        else:
            dest.parent.mkdir(parents=True, exist_ok=True)
            _ensure_parents_tracked(rel, layer, state)
            dest.unlink(missing_ok=True)
            _link_or_copy(path, dest)
        state[rel] = _PathState(kind, mode, digest, layer.label, layer.tier)


def _ensure_parents_tracked(rel: str, layer: AssemblyLayer,
                            state: dict[str, _PathState]) -> None:
    parts = rel.split("/")[:-1]
    prefix = ""
    for part in parts:
        prefix = f"{prefix}/{part}" if prefix else part
        if prefix not in state:
            state[prefix] = _PathState("dir", 0o755, "", layer.label,
                                       layer.tier)


def _merge_fragments(extracted_layers, target: Path,
                     state: dict[str, _PathState]) -> None:
    """Fold deb user/group/ldconfig fragments into /etc files.

    Fragment lines carry no ids; users and groups get sequential ids from
    100 upward, skipping any already taken by base-image files."""
    users: list[str] = []
    groups: list[str] = []
    shared_dirs: list[str] = []
    for _layer, extracted in extracted_layers:
        fragments = extracted / "fragments"
        passwd = fragments / "passwd"
        if passwd.is_file():
            users.extend(line for line in passwd.read_text().splitlines()
                         if line.strip())
        group = fragments / "group"
        if group.is_file():
            groups.extend(line for line in group.read_text().splitlines()
                          if line.strip())
        ldconfig = fragments / "ldconfig"
        if ldconfig.is_file():
            shared_dirs.extend(
                line.rsplit("/", 1)[0]
                for line in ldconfig.read_text().splitlines() if line.strip())

    def merge_ids(path: Path, rel: str, fragment_lines: list[str],
                  template) -> None:
        lines = (path.read_text().splitlines()
                 if path.is_file() else ["root:x:0:0:root:/root:/bin/sh"]
                 if rel == "etc/passwd" else ["root:x:0:"])
        present = {line.split(":", 1)[0] for line in lines if ":" in line}
        taken = set()
        for line in lines:
            fields = line.split(":")
            if len(fields) > 2 and fields[2].isdigit():
                taken.add(int(fields[2]))
        next_id = 100
        changed = False
        for line in fragment_lines:
            name = line.split(":", 1)[0]
            if name in present:
                continue
            while next_id in taken:
                next_id += 1
            taken.add(next_id)
            present.add(name)
            lines.append(template(line, next_id))
            changed = True
        if changed or not path.is_file():
            path.parent.mkdir(parents=True, exist_ok=True)
            if path.is_file():
                path.unlink()   # never write through a hardlinked blob
            path.write_text("".join(line + "\n" for line in lines))
            os.chmod(path, 0o644)
            _mark(state, rel, path)

    def passwd_template(line: str, uid: int) -> str:
        fields = line.split(":")
        # name:x:::gecos:home:shell -> fill uid and gid
        fields[2] = str(uid)
        fields[3] = str(uid)
        return ":".join(fields)

    def group_template(line: str, gid: int) -> str:
        fields = line.split(":")
        fields[2] = str(gid)
        return ":".join(fields)

    if users or groups:
        merge_ids(target / "etc" / "passwd", "etc/passwd", users,
                  passwd_template)
        merge_ids(target / "etc" / "group", "etc/group",
                  groups or [], group_template)
    if shared_dirs:
        conf = target / "etc" / "ld.so.conf.d" / "components.conf"
        existing = (conf.read_text().splitlines() if conf.is_file() else [])
        wanted = sorted(set(existing) | set(shared_dirs))
        conf.parent.mkdir(parents=True, exist_ok=True)
        if conf.is_file():
            conf.unlink()
        conf.write_text("".join(line + "\n" for line in wanted))
        os.chmod(conf, 0o644)
        _mark(state, "etc/ld.so.conf.d/components.conf", conf)


def _mark(state: dict[str, _PathState], rel: str, path: Path) -> None:
    parts = rel.split("/")
    prefix = ""
    for part in parts[:-1]:
        prefix = f"{prefix}/{part}" if prefix else part
        state.setdefault(prefix, _PathState("dir", 0o755, "", "merged", 5))
    state[rel] = _PathState("file", 0o644, sha256_file(path), "merged", 5)


def assemble(plan: AssemblyPlan, target: Path, store: LocalStore,
             payload_files: dict[str, bytes] | None = None) -> dict:
    """Materialize the plan into target; returns the rootfs manifest:
    sorted path -> (type, mode, digest-or-target)."""
    target = Path(target)
    target.mkdir(parents=True, exist_ok=True)
    state: dict[str, _PathState] = {}
    extracted_layers: list[tuple[AssemblyLayer, Path]] = []
    for layer in plan.layers:
        if layer.meta is None:
            continue
        extracted = store.extract(layer.meta.payload_digest)
        extracted_layers.append((layer, extracted))
        rootfs = extracted / "rootfs"
        if rootfs.is_dir():
            _apply_tree(rootfs, target, layer, state)
    _merge_fragments(extracted_layers, target, state)

    payload_files = payload_files or {}
    local_layer = AssemblyLayer("cir local payloads", 4, None)
    for mount, filename in plan.local_payloads:
        data = payload_files.get(filename)
        if data is None:
            raise AssemblyError(f"CIR payload file {filename!r} missing for "
                                f"mount {mount}")
        rel = mount.lstrip("/")
        dest = target / rel
        existing = state.get(rel)
        if existing is not None and existing.kind == "dir":
            raise AssemblyError(
                f"/{rel} is a dir in layer '{existing.layer}' but the CIR "
                "mounts a file there")
        dest.parent.mkdir(parents=True, exist_ok=True)
        _ensure_parents_tracked(rel, local_layer, state)
        if dest.exists() or dest.is_symlink():
            dest.unlink()
        dest.write_bytes(data)
        os.chmod(dest, 0o644)
        state[rel] = _PathState(
            "file", 0o644, hashlib.sha256(data).hexdigest(),
            local_layer.label, local_layer.tier)

    return {rel: (s.kind, s.mode, s.digest)
            for rel, s in sorted(state.items())}


# ----------------------------------------------------------------------------
# Runtime spec

def emit_runtime_spec(components, manifest: CirManifest) -> tuple[dict, list[str]]:
    """OCI-runtime-shaped config for the assembled rootfs.

    Base-image hints stack in layer order (later non-empty fields win,
    same-name env vars override); the CIR workdir beats any base image
    working directory."""
    warnings: list[str] = []
    merged = ConfigHints()
    env_vars: dict[str, str] = {}
    has_pypi = False
    for meta in components:
        if meta.id.manager is ManagerKind.PYPI:
            has_pypi = True
        hints = meta.hints
        if not hints:
            continue
        for var in hints.env:
            key, _, value = var.partition("=")
            env_vars[key] = value
        merged = ConfigHints(
            user=hints.user or merged.user,
            workdir=hints.workdir or merged.workdir,
            env=(),
            entrypoint=hints.entrypoint or merged.entrypoint,
            cmd=hints.cmd or merged.cmd,
        )
    if has_pypi:
        site = f"/{SITE_PACKAGES}"
        env_vars["PYTHONPATH"] = (f"{env_vars['PYTHONPATH']}:{site}"
                                  if env_vars.get("PYTHONPATH") else site)

    cwd = manifest.workdir if manifest.workdir != "/" else (merged.workdir
                                                            or "/")
    if cwd == "/" and not merged.workdir:
        warnings.append("no working directory from CIR or base image; "
                        "defaulting to /")
    args = list(merged.entrypoint) + list(merged.cmd)
    if not args:
        args = ["/bin/sh"]
        warnings.append("no entrypoint or command hints; defaulting to /bin/sh")

    uid = gid = 0
    if merged.user:
        head, _, tail = merged.user.partition(":")
        if head.isdigit():
            uid = int(head)
            gid = int(tail) if tail.isdigit() else uid

    spec = {
        "ociVersion": "1.0.2",
        "root": {"path": "rootfs", "readonly": False},
        "process": {
            "cwd": cwd,
            "args": args,
            "env": [f"{key}={value}"
                    for key, value in sorted(env_vars.items())],
            "user": {"uid": uid, "gid": gid},
        },
        "hostname": manifest.name,
        "annotations": {
            "app.name": manifest.name,
            "app.version": manifest.version,
        },
    }
    if merged.user and not merged.user.partition(":")[0].isdigit():
        spec["annotations"]["app.user"] = merged.user
    return spec, warnings


# ----------------------------------------------------------------------------
# Active sharing (single item)

def active_share(item, store: LocalStore, sheet: SpecSheet,
                 context: BuildContext | None = None):
    """Cheapest possible reuse check: newest cached component satisfying
    the item and compatible with the sheet, or None."""
    from .environment import build_eval_map, es_select

    spec = parse_specifier(item.manager, item.specifier)
    eval_map = build_eval_map(sheet, context)
    versions = []
    for raw in store.list_versions(item.manager, item.name):
        try:
            versions.append(Version(item.manager, raw))
        except Exception:
            continue
    for version in sort_versions(versions, reverse=True):
        if not matches(spec, version):
            continue
        if (item.manager is ManagerKind.PYPI and version.is_prerelease
                and not spec.names_prerelease):
            continue
        chosen = es_select(
            store.list_variants(item.manager, item.name, version.canonical),
            eval_map, store.cached_digests())
        if chosen is not None:
            return chosen.id
    return None


# ----------------------------------------------------------------------------
# Build orchestration

@dataclass
class BuildResult:
    rootfs: Path
    runtime_spec: dict
    lock: LockFile
    rootfs_manifest: dict
    resolution: ResolutionResult | None = None
    warnings: tuple[str, ...] = ()
    payload_bytes_fetched: int = 0
    bytes_fetched: int = 0


class _Prefetcher:
    """Fetch-and-extract pool fed by resolver decisions. Decisions can be
    backtracked, so a fetch here is speculative; failures surface only if
    the component is still selected at the end."""

    def __init__(self, client, store: LocalStore, jobs: int):
        self.client = client
        self.store = store
        self.pool = ThreadPoolExecutor(max_workers=max(1, jobs))
        self.futures: dict[str, object] = {}

    def __call__(self, meta: UniformComponentMeta) -> None:
        digest = meta.payload_digest
        if digest in self.futures:
            return
        self.futures[digest] = self.pool.submit(self._fetch, meta)

    def _fetch(self, meta: UniformComponentMeta) -> None:
        self.client.fetch_payload(meta, self.store)
        self.store.extract(meta.payload_digest)

    def finish(self, needed: list[UniformComponentMeta]) -> None:
        try:
            for meta in needed:
                future = self.futures.get(meta.payload_digest)
                if future is not None:
                    future.result()
                else:
                    self._fetch(meta)
        finally:
            self.pool.shutdown(wait=True)


def _materialize(result_components, client, store: LocalStore,
                 jobs: int) -> None:
    """Ensure every selected payload is fetched and extracted."""
    pending = [meta for meta in result_components
               if not store.is_extracted(meta.payload_digest)]
    if not pending:
        return
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        list(pool.map(
            lambda meta: (client.fetch_payload(meta, store),
                          store.extract(meta.payload_digest)),
            pending))


def _counter(client, attr: str) -> int:
    return getattr(client, attr, 0)


def lazy_build(cir_path: Path, sheet: SpecSheet, client, store: LocalStore,
               out_dir: Path, active_sharing: bool = False,
               jobs: int = 8) -> BuildResult:
    """The full deployment pipeline for one CIR on one platform."""
    cir_path = Path(cir_path)
    out_dir = Path(out_dir)
    manifest, payloads = read_cir(cir_path)

    bytes_before = _counter(client, "bytes_received")
    payload_before = _counter(client, "payload_bytes_received")

    prefetch = _Prefetcher(client, store, jobs)
    try:
        result = resolve(manifest.dependencies, sheet, client, store,
                         active_sharing=active_sharing, on_decide=prefetch)
    except BaseException:
        prefetch.pool.shutdown(wait=False, cancel_futures=True)
        raise
    prefetch.finish(result.components)
    # Active sharing can satisfy items from the store index while payload
    # bytes still need fetching through the real client.
    _materialize(result.components, client, store, jobs)

    plan = make_plan(result.components, manifest)
    rootfs = out_dir / "rootfs"
    if rootfs.exists():
        shutil.rmtree(rootfs)
    rootfs_manifest = assemble(plan, rootfs, store, payloads)
    runtime_spec, warnings = emit_runtime_spec(result.components, manifest)
    (out_dir / "config.json").write_text(
        json.dumps(runtime_spec, indent=2, sort_keys=True) + "\n")
    lock = _lock_from_resolution(manifest, sheet, result)

    return BuildResult(
        rootfs=rootfs,
        runtime_spec=runtime_spec,
        lock=lock,
        rootfs_manifest=rootfs_manifest,
        resolution=result,
        warnings=tuple(warnings),
        payload_bytes_fetched=(_counter(client, "payload_bytes_received")
                               - payload_before),
        bytes_fetched=_counter(client, "bytes_received") - bytes_before,
    )


def build_from_lock(cir_path: Path, lock: LockFile, client,
                    store: LocalStore, out_dir: Path,
                    jobs: int = 8) -> BuildResult:
    """Replay a lock: fetch exactly the pinned components, verify digests,
    assemble. No version or environment selection runs."""
    cir_path = Path(cir_path)
    out_dir = Path(out_dir)
    manifest, payloads = read_cir(cir_path)
    if (manifest.name, manifest.version) != (lock.name, lock.version):
        raise LockFileError(
            f"lock is for {lock.name} {lock.version}, CIR is "
            f"{manifest.name} {manifest.version}")

    bytes_before = _counter(client, "bytes_received")
    payload_before = _counter(client, "payload_bytes_received")

    metas: list[UniformComponentMeta] = []
    for cid, digest in lock.components:
        local = store.get_meta(cid)
        meta = local if local is not None else client.meta(cid)
        if meta is None:
            raise NotFoundError(f"pinned component {cid} unavailable")
        if meta.payload_digest != digest:
            raise DigestMismatchError(digest, meta.payload_digest,
                                      what=f"component {cid}")
        metas.append(meta)

    def fetch(meta: UniformComponentMeta) -> None:
        if not store.has_blob(meta.payload_digest):
            client.fetch_payload(meta, store)
        blob = store.blob_path(meta.payload_digest)
        actual = sha256_file(blob)
        if actual != meta.payload_digest:
            raise DigestMismatchError(meta.payload_digest, actual,
                                      what=f"cached payload of {meta.id}")
        store.extract(meta.payload_digest)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        list(pool.map(fetch, metas))

    plan = make_plan(metas, manifest)
    rootfs = out_dir / "rootfs"
    if rootfs.exists():
        shutil.rmtree(rootfs)
    rootfs_manifest = assemble(plan, rootfs, store, payloads)
    runtime_spec, warnings = emit_runtime_spec(metas, manifest)
    (out_dir / "config.json").write_text(
        json.dumps(runtime_spec, indent=2, sort_keys=True) + "\n")

    return BuildResult(
        rootfs=rootfs,
        runtime_spec=runtime_spec,
        lock=lock,
        rootfs_manifest=rootfs_manifest,
        resolution=None,
        warnings=tuple(warnings),
        payload_bytes_fetched=(_counter(client, "payload_bytes_received")
                               - payload_before),
        bytes_fetched=_counter(client, "bytes_received") - bytes_before,
    )
