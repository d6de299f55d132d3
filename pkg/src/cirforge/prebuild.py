"""Development-side analysis and packaging.

Scans a project tree for imports, reads its declared dependencies
(requirements.txt, pyproject.toml), trims dependencies that another
declared dependency already pulls in transitively, and packs the result
with the application files into a CIR archive: a deterministic tar.gz
holding `cir.manifest` plus a `payload/` tree.

Declared dependencies are authoritative; the import scan only classifies
and warns. A scanned import with no covering dependency is reported as
unresolved, and is adopted as an unconstrained dependency only when the
caller asks for that explicitly.
"""

from __future__ import annotations

import ast
import sys
import tarfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from packaging.requirements import InvalidRequirement, Requirement

from .archive import Entry, write_deterministic_tgz
from .errors import FetchError, ManifestError, MetadataError
from .model import (
    CirManifest,
    DependencyItem,
    ManagerKind,
    canonicalize_name,
    parse_manifest,
)
from .versions import parse_specifier, vs_select

__all__ = [
    "ImportRecord",
    "DependencyReport",
    "MODULE_DISTRIBUTIONS",
    "scan_imports",
    "read_declared",
    "filter_indirect",
    "analyze_project",
    "build_manifest",
    "pack_cir",
    "read_cir",
]

# Import names that differ from the distribution that ships them.
MODULE_DISTRIBUTIONS: dict[str, str] = {
    "attr": "attrs",
    "bs4": "beautifulsoup4",
    "cairo": "pycairo",
    "Crypto": "pycryptodome",
    "cv2": "opencv-python",
    "dateutil": "python-dateutil",
    "docx": "python-docx",
    "dotenv": "python-dotenv",
    "fitz": "pymupdf",
    "gi": "pygobject",
    "github": "pygithub",
    "googleapiclient": "google-api-python-client",
    "grpc": "grpcio",
    "jwt": "pyjwt",
    "kafka": "kafka-python",
    "Levenshtein": "python-levenshtein",
    "magic": "python-magic",
    "mpl_toolkits": "matplotlib",
    "MySQLdb": "mysqlclient",
    "OpenSSL": "pyopenssl",
    "PIL": "pillow",
    "pptx": "python-pptx",
    "serial": "pyserial",
    "skimage": "scikit-image",
    "sklearn": "scikit-learn",
    "telegram": "python-telegram-bot",
    "usb": "pyusb",
    "websocket": "websocket-client",
    "wx": "wxpython",
    "yaml": "pyyaml",
    "zmq": "pyzmq",
}

_STDLIB = frozenset(sys.stdlib_module_names) | {"__future__", "__main__"}


@dataclass(frozen=True)
class ImportRecord:
    """One top-level module imported somewhere in the project."""

    module: str
    file: str
    line: int


@dataclass
class DependencyReport:
    imports: tuple[ImportRecord, ...] = ()
    declared: tuple[DependencyItem, ...] = ()
    direct: tuple[DependencyItem, ...] = ()
    indirect: tuple[DependencyItem, ...] = ()
    # module name -> "direct" | "indirect" | "unresolved-import"
    import_classification: dict[str, str] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    @property
    def unresolved(self) -> tuple[str, ...]:
        return tuple(sorted(m for m, kind in self.import_classification.items()
                            if kind == "unresolved-import"))


def _scan_file(path: Path, rel: str):
    records: list[ImportRecord] = []
    warnings: list[str] = []
    try:
        tree = ast.parse(path.read_bytes(), filename=rel)
    except (OSError, SyntaxError, ValueError) as exc:
        return records, [f"{rel}: skipped ({exc.__class__.__name__}: {exc})"]
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                records.append(ImportRecord(alias.name.split(".")[0],
                                            rel, node.lineno))
        elif isinstance(node, ast.ImportFrom):
            if node.level == 0 and node.module:
                records.append(ImportRecord(node.module.split(".")[0],
                                            rel, node.lineno))
        elif isinstance(node, ast.Call):
            func = node.func
            dynamic = (isinstance(func, ast.Name) and func.id == "__import__") \
                or (isinstance(func, ast.Attribute)
                    and func.attr == "import_module")
            if dynamic:
                warnings.append(f"{rel}:{node.lineno}: dynamic import call "
                                "is not scanned")
    return records, warnings


def scan_imports(root: Path) -> tuple[tuple[ImportRecord, ...],
                                      tuple[str, ...]]:
    """Collect top-level imported module names from every .py file under
    root, standard library excluded. Files that fail to read or parse are
    skipped with a warning."""
    root = Path(root)
    files = sorted(p for p in root.rglob("*.py") if p.is_file())
    records: list[ImportRecord] = []
    warnings: list[str] = []
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = pool.map(
            lambda p: _scan_file(p, p.relative_to(root).as_posix()), files)
        for file_records, file_warnings in results:
            records.extend(r for r in file_records if r.module not in _STDLIB)
            warnings.extend(file_warnings)
    return tuple(records), tuple(warnings)


def _requirement_to_item(req: Requirement, origin: str,
                         warnings: list[str]) -> DependencyItem | None:
    if req.url:
        warnings.append(f"{origin}: URL requirement {req.name!r} skipped")
        return None
    if req.marker is not None:
        warnings.append(f"{origin}: requirement {req.name!r} keeps its "
                        f"environment marker out of the manifest")
    if req.extras:
        warnings.append(f"{origin}: extras {sorted(req.extras)} of "
                        f"{req.name!r} are not expanded")
    return DependencyItem(ManagerKind.PYPI, req.name, str(req.specifier))


def _parse_requirement_line(line: str, origin: str,
                            warnings: list[str]) -> DependencyItem | None:
    if line.startswith("-"):
        warnings.append(f"{origin}: option line {line.split()[0]!r} skipped")
        return None
    try:
        req = Requirement(line)
    except InvalidRequirement as exc:
        raise MetadataError(f"{origin}: bad requirement {line!r}: {exc}")
    return _requirement_to_item(req, origin, warnings)


def _read_requirements_txt(path: Path, warnings: list[str]):
    items: list[DependencyItem] = []
    pending = ""
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = pending + raw
        pending = ""
        if line.endswith("\\"):
            pending = line[:-1]
            continue
        cut = line.find(" #")
        if cut != -1:
            line = line[:cut]
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        item = _parse_requirement_line(line, f"{path.name}:{number}", warnings)
        if item is not None:
            items.append(item)
    return items


def _toml_load(path: Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        return _mini_toml(path.read_text())
    with open(path, "rb") as handle:
        return tomllib.load(handle)


def _mini_toml(text: str) -> dict:
    """Just enough TOML for [project] dependencies arrays: tables, string
    scalars, and possibly multi-line arrays of strings."""
    root: dict = {}
    table = root
    buffer = ""
    key = ""
    in_array = False
    for raw in text.splitlines():
        line = raw.strip()
        if in_array:
            buffer += " " + line
            if line.endswith("]"):
                table[key] = _mini_toml_array(buffer)
                in_array = False
            continue
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            name = line.strip("[]").strip().strip('"')
            table = root
            for part in name.split("."):
                table = table.setdefault(part, {})
            continue
        if "=" not in line:
            continue
        key, _, value = line.partition("=")
        key = key.strip().strip('"')
        value = value.strip()
        if value.startswith("[") and not value.endswith("]"):
            buffer = value
            in_array = True
        elif value.startswith("["):
            table[key] = _mini_toml_array(value)
        elif value.startswith(('"', "'")):
            table[key] = value[1:-1]
        else:
            table[key] = value
    return root


def _mini_toml_array(text: str) -> list[str]:
    inner = text.strip()[1:-1]
    out: list[str] = []
    current = ""
    quote = ""
    for ch in inner:
        if quote:
            if ch == quote:
                out.append(current)
                current = ""
                quote = ""
            else:
                current += ch
        elif ch in "\"'":
            quote = ch
    return out


def _read_pyproject(path: Path, warnings: list[str]):
    try:
        data = _toml_load(path)
    except Exception as exc:
        raise MetadataError(f"{path.name}: failed to parse: {exc}")
    deps = data.get("project", {}).get("dependencies", [])
    items: list[DependencyItem] = []
    for index, entry in enumerate(deps, start=1):
        if not isinstance(entry, str):
            raise MetadataError(
                f"{path.name}: dependency #{index} is not a string")
        item = _parse_requirement_line(
            entry, f"{path.name} project.dependencies[{index}]", warnings)
        if item is not None:
            items.append(item)
    return items


def _intersect(a: DependencyItem, b: DependencyItem) -> DependencyItem:
    """PyPI specifiers conjoin by comma; 'any' is the stored form of an
    unconstrained item and must not end up inside a clause list."""
    parts = [s for s in (a.specifier, b.specifier) if s and s != "any"]
    return DependencyItem(a.manager, a.name, ",".join(parts))


def read_declared(root: Path) -> tuple[tuple[DependencyItem, ...],
                                       tuple[str, ...]]:
    """Declared direct dependencies from requirements.txt and
    pyproject.toml, duplicates unified by specifier intersection."""
    root = Path(root)
    warnings: list[str] = []
    items: list[DependencyItem] = []
    requirements = root / "requirements.txt"
    if requirements.is_file():
        items.extend(_read_requirements_txt(requirements, warnings))
    pyproject = root / "pyproject.toml"
    if pyproject.is_file():
        items.extend(_read_pyproject(pyproject, warnings))
    merged: dict[tuple, DependencyItem] = {}
    for item in items:
        key = (item.manager, item.name)
        merged[key] = (_intersect(merged[key], item) if key in merged
                       else item)
    return tuple(merged.values()), tuple(warnings)


class _ClosureWalker:
    """Transitive dependency walker over registry metadata, expanding each
    package at the highest version satisfying the item that reached it.
    Closures are version-dependent; this is the resolver-shaped
    approximation, good enough to recognize redundancy."""

    def __init__(self, client):
        self.client = client
        self._meta_cache: dict = {}

    def best_metas(self, item: DependencyItem):
        key = (item.manager, item.name, item.specifier)
        if key in self._meta_cache:
            return self._meta_cache[key]
        metas = []
        try:
            spec = parse_specifier(item.manager, item.specifier)
            best = vs_select(self.client.versions(item.manager, item.name),
                             spec)
            if best is not None:
                metas = list(self.client.variants(item.manager, item.name,
                                                  best))
        except FetchError:
            raise
        except Exception:
            metas = []
        self._meta_cache[key] = metas
        return metas

    def closure(self, item: DependencyItem) -> dict[tuple, list]:
        """(manager, name) -> metas, for everything reachable below item
        (the item's own package excluded)."""
        seen: dict[tuple, list] = {}
        queue = [dep for meta in self.best_metas(item) for dep in meta.deps]
        while queue:
            dep = queue.pop(0)
            pkg = (dep.manager, dep.name)
            if pkg in seen:
                continue
            metas = self.best_metas(dep)
            seen[pkg] = metas
            for meta in metas:
                queue.extend(meta.deps)
        seen.pop((item.manager, item.name), None)
        return seen


def filter_indirect(candidates, client, warnings: list[str] | None = None):
    """Drop candidates that another candidate's transitive closure already
    covers. Keeps declaration order; on an unreachable registry the list
    passes through unchanged with a warning."""
    candidates = list(candidates)
    if client is None or len(candidates) < 2:
        return candidates
    walker = _ClosureWalker(client)
    try:
        closures = {(c.manager, c.name): set(walker.closure(c))
                    for c in candidates}
    except FetchError as exc:
        if warnings is not None:
            warnings.append(f"registry unreachable, dependency list kept "
                            f"as declared: {exc}")
        return candidates
    kept: list[DependencyItem] = []
    for candidate in candidates:
        pkg = (candidate.manager, candidate.name)
        if any(pkg in closures[(k.manager, k.name)] for k in kept):
            continue
        kept = [k for k in kept if (k.manager, k.name) not in closures[pkg]]
        kept.append(candidate)
    return kept


def analyze_project(root: Path, client=None,
                    adopt_imports: bool = False) -> DependencyReport:
    """Full analysis: scan imports, read declared dependencies, trim the
    transitively covered ones, classify every import."""
    root = Path(root)
    imports, scan_warnings = scan_imports(root)
    declared, declare_warnings = read_declared(root)
    warnings = list(scan_warnings) + list(declare_warnings)

    direct = filter_indirect(declared, client, warnings)
    direct_pkgs = {(i.manager, i.name) for i in direct}
    indirect = tuple(i for i in declared
                     if (i.manager, i.name) not in direct_pkgs)

    # Module coverage: canonical distribution names plus module names the
    # registry metadata says each distribution provides.
    direct_modules: set[str] = set()
    indirect_modules: set[str] = set()
    if client is not None:
        walker = _ClosureWalker(client)
        try:
            for item in direct:
                for meta in walker.best_metas(item):
                    direct_modules.update(v for k, v in meta.provides
                                          if k == "module")
                for pkg, metas in walker.closure(item).items():
                    for meta in metas:
                        indirect_modules.update(v for k, v in meta.provides
                                                if k == "module")
        except FetchError as exc:
            warnings.append(f"registry unreachable, import coverage limited "
                            f"to name matching: {exc}")

    classification: dict[str, str] = {}
    adopted: list[DependencyItem] = []
    direct_names = {i.name for i in direct}
    indirect_names = {i.name for i in indirect}
    for record in imports:
        module = record.module
        if module in classification:
            continue
        dist = canonicalize_name(
            ManagerKind.PYPI, MODULE_DISTRIBUTIONS.get(module, module))
        if dist in direct_names or module in direct_modules:
            classification[module] = "direct"
        elif dist in indirect_names or module in indirect_modules:
            classification[module] = "indirect"
        else:
            classification[module] = "unresolved-import"
            where = f"{record.file}:{record.line}"
            if adopt_imports:
                adopted.append(DependencyItem(ManagerKind.PYPI, dist, ""))
                warnings.append(f"{where}: import {module!r} adopted as "
                                f"dependency {dist!r} (unconstrained)")
            else:
                warnings.append(f"{where}: import {module!r} is covered by "
                                "no declared dependency")

    return DependencyReport(
        imports=imports,
        declared=declared,
        direct=tuple(direct) + tuple(adopted),
        indirect=indirect,
        import_classification=classification,
        warnings=tuple(warnings),
    )


def build_manifest(name: str, version: str, report: DependencyReport,
                   local_payloads=(), workdir: str = "/app",
                   extra_items=()) -> CirManifest:
    """Manifest from an analysis report plus caller-declared extras
    (system packages, base images, local file mounts)."""
    deps = tuple(report.direct) + tuple(extra_items)
    return CirManifest(name=name, version=version, dependencies=deps,
                       local_payloads=tuple(local_payloads), workdir=workdir)


def pack_cir(manifest: CirManifest, payload_files: dict[str, Path],
             out_path: Path, compresslevel: int = 6) -> str:
    """Write the CIR archive; returns its sha256. payload_files maps the
    file names referenced by the manifest's local mounts to source paths."""
    declared = {filename for _mount, filename in manifest.local_payloads}
    missing = declared - set(payload_files)
    if missing:
        raise ManifestError(
            f"manifest references local payload files not supplied: "
            f"{', '.join(sorted(missing))}")
    entries = [Entry("cir.manifest", data=manifest.serialize().encode())]
    if payload_files:
        entries.append(Entry("payload", "dir", 0o755))
    for filename in sorted(payload_files):
        source = Path(payload_files[filename])
        if not source.is_file():
            raise ManifestError(f"local payload file missing: {source}")
        entries.append(Entry(f"payload/{filename}",
                             mode=source.stat().st_mode & 0o7777,
                             data=source.read_bytes()))
    return write_deterministic_tgz(Path(out_path), entries,
                                   compresslevel=compresslevel)


def read_cir(path: Path) -> tuple[CirManifest, dict[str, bytes]]:
    """Open a CIR archive: returns the manifest and the payload files."""
    payloads: dict[str, bytes] = {}
    manifest_text: str | None = None
    try:
        with tarfile.open(path, mode="r:gz") as tar:
            for member in tar.getmembers():
                name = member.name
                # Prefix strip only; lstrip("./") would eat leading dots
                # of hidden names.
                while name.startswith("./"):
                    name = name[2:]
                if name.startswith("/") or ".." in name.split("/"):
                    raise ManifestError(f"unsafe member {member.name!r} "
                                        f"in {path}")
                if name == "cir.manifest" and member.isfile():
                    manifest_text = tar.extractfile(member).read().decode()
                elif name.startswith("payload/") and member.isfile():
                    payloads[name[len("payload/"):]] = \
                        tar.extractfile(member).read()
    except tarfile.TarError as exc:
        raise ManifestError(f"not a CIR archive: {path}: {exc}")
    if manifest_text is None:
        raise ManifestError(f"{path} has no cir.manifest")
    manifest = parse_manifest(manifest_text)
    for _mount, filename in manifest.local_payloads:
        if filename not in payloads:
            raise ManifestError(f"{path} lacks payload file {filename!r} "
                                "that the manifest mounts")
    return manifest, payloads
