"""Command-line entry point.

One binary, six subcommands: prebuild (project dir to CIR), build (CIR to
rootfs), convert (upstream artifact to uniform components), registry serve
(HTTP component registry), inspect (pretty-print CIR/lock/component), and
prune (store garbage collection).

Configuration precedence is flag over environment (CIRFORGE_REGISTRY,
CIRFORGE_STORE) over config file over built-in default; `--print-config`
shows the resolved values and where each came from.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
from dataclasses import dataclass
from pathlib import Path

from .build import (
    BuildResult,
    build_from_lock,
    lazy_build,
    make_plan,
    parse_lock,
)
from .environment import load_sheet_file, probe_specsheet
from .errors import CirError, ConfigurationError, UsageError
from .model import (
    ComponentId,
    DependencyItem,
    ManagerKind,
    parse_manifest,
    parse_meta,
    serialize_meta,
)
from .prebuild import analyze_project, build_manifest, pack_cir, read_cir
from .registry import (
    HttpRegistryClient,
    LocalRegistryClient,
    RegistryServer,
    RegistryService,
)
from .resolver import StoreOnlyClient
from .store import LocalStore
from .upstream import DirectoryUpstream

__all__ = ["main"]

_ENV_REGISTRY = "CIRFORGE_REGISTRY"
_ENV_STORE = "CIRFORGE_STORE"
_DEFAULT_STORE = "~/.cache/cirforge/store"


@dataclass
class GlobalConfig:
    registry: str = ""
    store: str = ""
    specsheet: str = ""
    jobs: int = 8
    verbose: bool = False
    sources: dict = None

    @property
    def store_path(self) -> Path:
        return Path(self.store).expanduser()


def _config_file_path(flag_value: str | None) -> Path:
    if flag_value:
        return Path(flag_value).expanduser()
    base = os.environ.get("XDG_CONFIG_HOME", "~/.config")
    return Path(base).expanduser() / "cirforge" / "config"


def _load_config(args) -> GlobalConfig:
    """flag > environment > config file > default, per key."""
    path = _config_file_path(args.config)
    file_values: dict[str, str] = {}
    if path.is_file():
        file_values = load_sheet_file(path)

    def pick(flag, env_key: str | None, file_key: str, default):
        if flag not in (None, ""):
            return flag, "flag"
        if env_key and os.environ.get(env_key):
            return os.environ[env_key], f"env {env_key}"
        if file_key in file_values:
            return file_values[file_key], f"file {path}"
        return default, "default"

    registry, registry_src = pick(args.registry, _ENV_REGISTRY, "registry", "")
    store, store_src = pick(args.store, _ENV_STORE, "store", _DEFAULT_STORE)
    sheet, sheet_src = pick(args.specsheet, None, "specsheet", "")
    jobs, jobs_src = pick(args.jobs, None, "jobs", 8)
    try:
        jobs = int(jobs)
    except (TypeError, ValueError):
        raise ConfigurationError(f"jobs must be an integer, got {jobs!r}")
    return GlobalConfig(
        registry=str(registry), store=str(store), specsheet=str(sheet),
        jobs=jobs, verbose=bool(args.verbose),
        sources={"registry": registry_src, "store": store_src,
                 "specsheet": sheet_src, "jobs": jobs_src})


def _print_config(config: GlobalConfig) -> None:
    for key in ("registry", "store", "specsheet", "jobs"):
        value = getattr(config, key)
        print(f"{key}={value}  # {config.sources[key]}")


def _make_client(config: GlobalConfig, store: LocalStore | None):
    """Registry transport: HTTP when a registry is configured, otherwise
    the local store index alone."""
    if config.registry:
        return HttpRegistryClient(config.registry)
    if store is not None:
        return StoreOnlyClient(store)
    return None


def _sheet(config: GlobalConfig):
    override = Path(config.specsheet).expanduser() if config.specsheet else None
    return probe_specsheet(override_file=override)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="cirforge",
                     description="Pre-build apps into portable CIR archives "
                                 "and lazily build them into root "
                                 "filesystems on the target.")
    parser.add_argument("--registry", help="registry base URL")
    parser.add_argument("--store", help="local component store root")
    parser.add_argument("--specsheet", help="platform sheet override file")
    parser.add_argument("--config", help="config file path")
    parser.add_argument("--jobs", type=int, help="fetch/extract parallelism")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--print-config", action="store_true",
                        help="print resolved configuration and exit")
    commands = parser.add_subparsers(dest="command")

    pre = commands.add_parser("prebuild", help="analyze a project and pack "
                                               "a CIR archive")
    pre.add_argument("project", help="project directory")
    pre.add_argument("-o", "--output", required=True, help="CIR output path")
    pre.add_argument("--name", help="application name (default: directory "
                                    "name)")
    pre.add_argument("--app-version", default="0.1.0")
    pre.add_argument("--workdir", default="/app")
    pre.add_argument("--local", action="append", default=[],
                     metavar="MOUNT=FILE",
                     help="mount a local file into the image (repeatable)")
    pre.add_argument("--dep", action="append", default=[],
                     metavar="MANAGER:NAME[:SPEC]",
                     help="extra dependency such as apt:libgl1 or "
                          "oci:python:3.11-slim (repeatable)")
    pre.add_argument("--adopt-imports", action="store_true",
                     help="declare unresolved imports as unconstrained deps")
    pre.add_argument("--report", action="store_true",
                     help="print the dependency analysis report")
    pre.add_argument("--format", choices=("text", "json"), default="text")

    build = commands.add_parser("build", help="build a rootfs from a CIR")
    build.add_argument("cir", help="CIR archive path")
    build.add_argument("-o", "--output", required=True,
                       help="output directory (rootfs/ and config.json)")
    build.add_argument("--lock", help="write the lock file here")
    build.add_argument("--from-lock", help="replay this lock file instead "
                                           "of resolving")
    build.add_argument("--active-sharing", action="store_true",
                       help="prefer cached components before asking the "
                            "registry")
    build.add_argument("--mount-plan", action="store_true",
                       help="also write the overlay lowerdir ordering")

    convert = commands.add_parser("convert", help="convert an upstream "
                                                  "artifact to uniform "
                                                  "components")
    convert.add_argument("--kind", required=True,
                         choices=("wheel", "deb", "oci", "sdist"))
    convert.add_argument("--in", dest="input", required=True,
                         help="artifact path (file or OCI layout dir)")
    convert.add_argument("--xdeps", help="cross-manager dependency rules "
                                         "file")
    convert.add_argument("--target-sheet", help="platform sheet for "
                                                "conversion decisions")
    convert.add_argument("-o", "--out-dir",
                         help="write component archives here (default: "
                              "publish only)")

    registry = commands.add_parser("registry", help="registry operations")
    registry_sub = registry.add_subparsers(dest="registry_command")
    serve = registry_sub.add_parser("serve", help="serve the component "
                                                  "registry HTTP API")
    serve.add_argument("--listen", default="127.0.0.1:8321",
                       metavar="HOST:PORT")
    serve.add_argument("--upstream", help="directory of upstream artifacts "
                                          "to convert on demand")
    serve.add_argument("--xdeps", help="cross-manager dependency rules file")

    inspect = commands.add_parser("inspect", help="print a CIR, lock file, "
                                                  "component archive, or "
                                                  "stored component")
    inspect.add_argument("target", help="path or component id "
                                        "(Manager/name/version/environment)")
    inspect.add_argument("--format", choices=("text", "json"),
                         default="text")

    prune = commands.add_parser("prune", help="check the store and drop "
                                              "unreferenced data")
    prune.add_argument("--verify", action="store_true",
                       help="re-hash every payload against its digest")
    prune.add_argument("--dry-run", action="store_true",
                       help="report without deleting")
    return parser


# ----------------------------------------------------------------------------
# Subcommands

def _parse_local(values) -> tuple[list[tuple[str, str]], dict[str, Path]]:
    mounts: list[tuple[str, str]] = []
    files: dict[str, Path] = {}
    for value in values:
        mount, sep, file_part = value.partition("=")
        if not sep or not mount.startswith("/"):
            raise UsageError(f"--local wants /mount/path=file, got {value!r}")
        source = Path(file_part).expanduser()
        filename = source.name
        mounts.append((mount, filename))
        files[filename] = source
    return mounts, files


def _parse_extra_dep(value: str) -> DependencyItem:
    parts = value.split(":", 2)
    if len(parts) < 2:
        raise UsageError(f"--dep wants MANAGER:NAME[:SPEC], got {value!r}")
    manager = ManagerKind.parse(parts[0])
    spec = parts[2] if len(parts) == 3 else ""
    return DependencyItem(manager, parts[1], spec)


def cmd_prebuild(args, config: GlobalConfig) -> int:
    project = Path(args.project).expanduser()
    if not project.is_dir():
        raise UsageError(f"project directory {project} does not exist")
    client = HttpRegistryClient(config.registry) if config.registry else None
    report = analyze_project(project, client,
                             adopt_imports=args.adopt_imports)
    mounts, files = _parse_local(args.local)
    extra = [_parse_extra_dep(value) for value in args.dep]
    manifest = build_manifest(
        name=args.name or project.resolve().name,
        version=args.app_version,
        report=report,
        local_payloads=mounts,
        workdir=args.workdir,
        extra_items=extra)
    out = Path(args.output).expanduser()
    digest = pack_cir(manifest, files, out)

    if args.report or args.format == "json":
        payload = {
            "direct": [str(d) for d in report.direct],
            "indirect": [str(d) for d in report.indirect],
            "unresolved_imports": list(report.unresolved),
            "warnings": list(report.warnings),
            "output": str(out),
            "digest": digest,
        }
        if args.format == "json":
            print(json.dumps(payload, indent=2, sort_keys=True))
            return 0
        for key in ("direct", "indirect", "unresolved_imports", "warnings"):
            for line in payload[key]:
                print(f"{key[:-1] if key.endswith('s') else key}: {line}")
    for warning in report.warnings if not args.report else ():
        print(f"warning: {warning}", file=sys.stderr)
    print(f"packed {manifest.name} {manifest.version} "
          f"({len(manifest.dependencies)} deps) -> {out}")
    print(f"sha256:{digest}")
    return 0


def cmd_build(args, config: GlobalConfig) -> int:
    store = LocalStore(config.store_path)
    client = _make_client(config, store)
    cir = Path(args.cir).expanduser()
    out_dir = Path(args.output).expanduser()
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.from_lock:
        lock_text = Path(args.from_lock).expanduser().read_text()
        result = build_from_lock(cir, parse_lock(lock_text), client, store,
                                 out_dir, jobs=config.jobs)
    else:
        sheet = _sheet(config)
        result = lazy_build(cir, sheet, client, store, out_dir,
                            active_sharing=args.active_sharing,
                            jobs=config.jobs)
        lock_path = (Path(args.lock).expanduser() if args.lock
                     else out_dir / "build.lock")
        lock_path.write_text(result.lock.serialize())

    if args.mount_plan:
        manifest, _payloads = read_cir(cir)
        metas = _lock_metas(result, store)
        (out_dir / "mount.plan").write_text(
            make_plan(metas, manifest).mount_plan())
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"assembled {len(result.lock.components)} components "
          f"-> {result.rootfs}")
    print(f"fetched {result.payload_bytes_fetched} payload bytes "
          f"({result.bytes_fetched} total)")
    return 0


def _lock_metas(result: BuildResult, store: LocalStore):
    if result.resolution is not None:
        return result.resolution.components
    metas = []
    for cid, _digest in result.lock.components:
        meta = store.get_meta(cid)
        if meta is None:
            raise UsageError(f"component {cid} vanished from the store")
        metas.append(meta)
    return metas


def cmd_convert(args, config: GlobalConfig) -> int:
    from .convert import convert_deb, convert_oci, convert_sdist, convert_wheel
    from .convert.xdeps import XDeps

    if not config.registry and not args.out_dir:
        raise UsageError("convert needs --registry (publish) or "
                         "-o/--out-dir (write archives)")
    xdeps = XDeps.load(Path(args.xdeps).expanduser()) if args.xdeps else None
    sheet = (probe_specsheet(override_file=Path(args.target_sheet).expanduser())
             if args.target_sheet else _sheet(config))
    source = Path(args.input).expanduser()
    import tempfile

    with tempfile.TemporaryDirectory(prefix="convert-") as scratch:
        out_dir = Path(args.out_dir).expanduser() if args.out_dir \
            else Path(scratch)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.kind == "wheel":
            converted = [convert_wheel(source, sheet, out_dir, xdeps=xdeps)]
        elif args.kind == "deb":
            converted = [convert_deb(source, out_dir, xdeps=xdeps)]
        elif args.kind == "oci":
            converted = convert_oci(source, out_dir, xdeps=xdeps)
        else:
            converted = convert_sdist(source, sheet, out_dir, xdeps=xdeps)

        client = HttpRegistryClient(config.registry) if config.registry \
            else None
        for component in converted:
            if client is not None:
                response = client.publish(component.payload_path)
                print(f"published {component.meta.id} "
                      f"sha256:{response['digest']}")
            else:
                print(f"wrote {component.payload_path} "
                      f"({component.meta.id})")
            for warning in component.report.warnings:
                print(f"warning: {warning}", file=sys.stderr)
            if config.verbose:
                for action in component.report.actions:
                    print(f"  {action}")
    return 0


def cmd_registry_serve(args, config: GlobalConfig) -> int:
    host, _, port_text = args.listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise UsageError(f"--listen wants HOST:PORT, got {args.listen!r}")
    store = LocalStore(config.store_path)
    upstream = (DirectoryUpstream(Path(args.upstream).expanduser())
                if args.upstream else None)
    xdeps = None
    if args.xdeps:
        from .convert.xdeps import XDeps

        xdeps = XDeps.load(Path(args.xdeps).expanduser())
    service = RegistryService(store, upstream=upstream, sheet=_sheet(config),
                              xdeps=xdeps)
    server = RegistryServer(service, host=host, port=int(port_text),
                            verbose=config.verbose)
    # serve on a worker thread; the main thread just waits for a signal so
    # stop() never runs inside the serve loop it is trying to join
    stop_requested = threading.Event()

    def shutdown(_signum, _frame):
        stop_requested.set()

    signal.signal(signal.SIGTERM, shutdown)
    signal.signal(signal.SIGINT, shutdown)
    server.start()
    print(f"registry listening on {server.address} (store: {store.root})",
          flush=True)
    try:
        # timed waits so the signal handler gets a turn between polls
        while not stop_requested.wait(timeout=0.5):
            pass
    finally:
        server.stop()
    return 0


def _looks_like_lock(text: str) -> bool:
    head = text.lstrip()[:200]
    return head.startswith("[FORMAT]")


def cmd_inspect(args, config: GlobalConfig) -> int:
    target = args.target
    path = Path(target).expanduser()
    as_json = args.format == "json"

    def emit(kind: str, data: dict) -> None:
        if as_json:
            print(json.dumps({"kind": kind, **data}, indent=2,
                             sort_keys=True))
        else:
            _emit_text(kind, data)

    if path.is_file():
        if path.suffix in (".tgz", ".tar") or path.name.endswith(".tar.gz") \
                or path.suffix == ".cir" or _is_gzip(path):
            kind, data = _inspect_archive(path)
            emit(kind, data)
            return 0
        text = path.read_text()
        if _looks_like_lock(text):
            emit("lock", _lock_data(parse_lock(text)))
            return 0
        if text.lstrip().startswith("[ID]"):
            emit("component", _meta_data(parse_meta(text)))
            return 0
        emit("cir", _manifest_data(parse_manifest(text)))
        return 0

    # not a file: treat as a component id in the local store; both the
    # name and the environment may contain "/", so try every split
    parts = target.split("/")
    if len(parts) >= 4:
        manager = ManagerKind.parse(parts[0])
        store = LocalStore(config.store_path)
        for version_at in range(2, len(parts) - 1):
            cid = ComponentId(manager, "/".join(parts[1:version_at]),
                              parts[version_at],
                              "/".join(parts[version_at + 1:]))
            meta = store.get_meta(cid)
            if meta is not None:
                emit("component", _meta_data(meta))
                return 0
        raise UsageError(f"component {target} not in store {store.root}")
    raise UsageError(f"nothing to inspect at {target!r}")


def _is_gzip(path: Path) -> bool:
    with open(path, "rb") as handle:
        return handle.read(2) == b"\x1f\x8b"


def _inspect_archive(path: Path):
    import tarfile

    with tarfile.open(path, mode="r:*") as tar:
        names = tar.getnames()
        if any(n.lstrip("./") == "cir.manifest" for n in names):
            manifest, payloads = read_cir(path)
            data = _manifest_data(manifest)
            data["payload_files"] = {name: len(blob)
                                     for name, blob in payloads.items()}
            return "cir", data
        if any(n.lstrip("./") == "uniform.meta" for n in names):
            member = next(m for m in tar.getmembers()
                          if m.name.lstrip("./") == "uniform.meta")
            meta = parse_meta(tar.extractfile(member).read().decode())
            return "component", _meta_data(meta)
    raise UsageError(f"{path} is neither a CIR nor a component archive")


def _manifest_data(manifest) -> dict:
    return {
        "name": manifest.name,
        "version": manifest.version,
        "dependencies": [str(d) for d in manifest.dependencies],
        "local_payloads": [{"mount": m, "file": f}
                           for m, f in manifest.local_payloads],
        "workdir": manifest.workdir,
    }


def _lock_data(lock) -> dict:
    return {
        "cir": {"name": lock.name, "version": lock.version},
        "format": lock.format_version,
        "specsheet": dict(lock.sheet),
        "components": [{"id": str(cid), "digest": digest}
                       for cid, digest in lock.components],
        "context": dict(lock.context),
    }


def _meta_data(meta) -> dict:
    return {
        "id": str(meta.id),
        "deps": [str(d) for d in meta.deps],
        "context": dict(meta.context.entries),
        "requirements": [f"{key} {constraint}"
                         for key, constraint in meta.requirements],
        "provides": [f"{kind} {value}" for kind, value in meta.provides],
        "payload": {"digest": meta.payload_digest,
                    "size": meta.payload_size},
        "document": serialize_meta(meta, include_payload=True),
    }


def _emit_text(kind: str, data: dict, indent: str = "") -> None:
    print(f"{indent}{kind}:")
    for key, value in data.items():
        if isinstance(value, dict):
            print(f"{indent}  {key}:")
            for sub_key, sub_value in value.items():
                print(f"{indent}    {sub_key}: {sub_value}")
        elif isinstance(value, list):
            print(f"{indent}  {key}: ({len(value)})")
            for item in value:
                print(f"{indent}    - {item}")
        elif key == "document":
            continue
        else:
            print(f"{indent}  {key}: {value}")


def cmd_prune(args, config: GlobalConfig) -> int:
    store = LocalStore(config.store_path)
    report = store.fsck(verify_digests=args.verify)
    for rel in report.dangling:
        print(f"dangling index entry: {rel}", file=sys.stderr)
    for rel in report.corrupt:
        print(f"corrupt entry: {rel}", file=sys.stderr)
    if args.dry_run:
        print(f"would remove {len(report.orphan_blobs)} blobs, "
              f"{len(report.orphan_extracted)} extractions, "
              f"{len(report.tmp_entries)} tmp entries")
    else:
        stats = store.prune()
        print(f"removed {stats.removed_blobs} blobs, "
              f"{stats.removed_extracted} extractions, "
              f"{stats.removed_tmp} tmp entries "
              f"({stats.freed_bytes} bytes)")
    return 0 if report.ok else 1


# ----------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(args)
        if args.print_config:
            _print_config(config)
            return 0
        if args.command == "prebuild":
            return cmd_prebuild(args, config)
        if args.command == "build":
            return cmd_build(args, config)
        if args.command == "convert":
            return cmd_convert(args, config)
        if args.command == "registry":
            if args.registry_command == "serve":
                return cmd_registry_serve(args, config)
            raise UsageError("registry wants a subcommand: serve")
        if args.command == "inspect":
            return cmd_inspect(args, config)
        if args.command == "prune":
            return cmd_prune(args, config)
        parser.print_help()
        return 0
    except CirError as exc:
        message = str(exc).splitlines()[0] if str(exc) else exc.category
        print(f"cirforge: [{exc.category}] {message}", file=sys.stderr)
        for line in str(exc).splitlines()[1:]:
            print(f"  {line}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
