"""Target-platform handling: spec sheets, environment variant selection,
and the requirement constraints that connect them.

A component variant carries requirement entries like ``(python, >=3.7)`` or
``(cpu, =amd64)``. They are evaluated against an evaluation map: the host
spec sheet overlaid with everything the build context has accumulated so
far (components can supply facts such as a python version that the bare
host lacks).

Requirement constraint grammar, clauses comma-joined (all must hold)::

    =VALUE      exact string equality
    !=VALUE     inequality; the only form an absent key satisfies
    ==PREFIX.*  natural prefix match (``==3.10.*`` accepts 3.10.18)
    ==VALUE     natural equality (token-wise, 2.17 == 2.17)
    >=V >V <=V <V   natural order: digit runs compare numerically

Natural order means "2.17" > "2.5" even though it sorts lower as a string.
"""

from __future__ import annotations

import platform
import re
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError, MetadataError, UnsupportedPlatformError
from .model import (
    SHEET_CPU,
    SHEET_LIBC,
    SHEET_OS,
    SHEET_PYTHON,
    BuildContext,
    ManagerKind,
    SpecSheet,
    UniformComponentMeta,
)

__all__ = [
    "normalize_cpu",
    "probe_specsheet",
    "load_sheet_file",
    "eval_constraint",
    "requirements_satisfied",
    "Deployability",
    "score_variant",
    "es_select",
    "pypi_compatible_tags",
    "wheel_tag_requirements",
    "deb_arch_requirements",
    "oci_platform_requirements",
]

_CPU_ALIASES = {
    "x86_64": "amd64", "amd64": "amd64", "x64": "amd64",
    "aarch64": "aarch64", "arm64": "aarch64",
    "i386": "i386", "i486": "i386", "i586": "i386", "i686": "i386",
    "armv7l": "armhf", "armhf": "armhf",
    "ppc64le": "ppc64el", "ppc64el": "ppc64el",
    "s390x": "s390x", "riscv64": "riscv64",
}


def normalize_cpu(machine: str) -> str:
    machine = machine.strip().lower()
    return _CPU_ALIASES.get(machine, machine)


def _probe_os() -> str:
    if sys.platform.startswith("linux"):
        return "linux"
    if sys.platform == "darwin":
        return "macos"
    if sys.platform in ("win32", "cygwin"):
        return "windows"
    return sys.platform


def load_sheet_file(path: Path) -> dict[str, str]:
    """Read 'key value' (or 'key=value') lines into a mapping."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read spec sheet {path}: {exc}") from exc
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line and " " not in line.split("=", 1)[0]:
            key, _, value = line.partition("=")
        else:
            key, _, value = line.partition(" ")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigurationError(f"bad sheet line {lineno} in {path}: {line!r}")
        entries[key] = value
    return entries


def probe_specsheet(overrides=None, override_file: Path | None = None) -> SpecSheet:
    """Describe the target platform: probe the host, then apply overrides
    from a sheet file and finally explicit key/value overrides."""
    probed: dict[str, str] = {
        SHEET_CPU: normalize_cpu(platform.machine() or ""),
        SHEET_OS: _probe_os(),
        SHEET_PYTHON: "%d.%d.%d" % sys.version_info[:3],
    }
    libc_name, libc_version = platform.libc_ver()
    if libc_name == "glibc" and libc_version:
        probed[SHEET_LIBC] = libc_version
    if override_file is not None:
        probed.update(load_sheet_file(override_file))
    if overrides:
        probed.update({str(k): str(v) for k, v in overrides.items()})
    probed = {k: v for k, v in probed.items() if v}
    if not probed.get(SHEET_CPU) or not probed.get(SHEET_OS):
        raise ConfigurationError("platform probe found no cpu/os and no override given")
    return SpecSheet.from_mapping(probed)


# --------------------------------------------------------------------------
# Constraint evaluation

def _nat_tokens(value: str) -> list[object]:
    return [int(run) if run.isdigit() else run
            for run in re.findall(r"\d+|\D+", value)]


def _nat_cmp(a: str, b: str) -> int:
    ta, tb = _nat_tokens(a), _nat_tokens(b)
    for i in range(max(len(ta), len(tb))):
        if i >= len(ta):
            return -1
        if i >= len(tb):
            return 1
        xa, xb = ta[i], tb[i]
        if isinstance(xa, int) != isinstance(xb, int):
            # Mixed token kinds at one position: numbers sort after text.
            return 1 if isinstance(xa, int) else -1
        if xa != xb:
            return -1 if xa < xb else 1
    return 0


def _nat_prefix_match(prefix: str, actual: str) -> bool:
    want = _nat_tokens(prefix)
    have = _nat_tokens(actual)
    for i, expected in enumerate(want):
        if i < len(have):
            got = have[i]
        else:
            got = "." if isinstance(expected, str) else 0
        if got != expected:
            return False
    return True


_EXACT_OPS = ("=", "==")


def eval_constraint(constraint: str, actual: str | None) -> bool:
    """Evaluate one requirement constraint against the actual value
    (None when the key is absent from the evaluation map)."""
    for clause in constraint.split(","):
        clause = clause.strip()
        if not clause:
            raise MetadataError(f"empty clause in constraint {constraint!r}")
        if not _eval_clause(clause, actual):
            return False
    return True


def _eval_clause(clause: str, actual: str | None) -> bool:
    for op in ("==", "!=", ">=", "<=", ">", "<", "="):
        if clause.startswith(op):
            operand = clause[len(op):].strip()
            break
    else:
        op, operand = "=", clause
    if not operand:
        raise MetadataError(f"empty operand in constraint clause {clause!r}")
    if actual is None:
        return op == "!="
    if op == "=":
        return actual == operand
    if op == "!=":
        return actual != operand
    if op == "==":
        if operand.endswith(".*"):
            return _nat_prefix_match(operand[:-2], actual)
        return _nat_cmp(actual, operand) == 0
    result = _nat_cmp(actual, operand)
    return {"<": result < 0, "<=": result <= 0,
            ">": result > 0, ">=": result >= 0}[op]


def requirements_satisfied(requirements, eval_map) -> bool:
    return all(eval_constraint(constraint, eval_map.get(key))
               for key, constraint in requirements)


def _exact_clause_count(requirements) -> int:
    count = 0
    for _key, constraint in requirements:
        for clause in constraint.split(","):
            clause = clause.strip()
            if clause.startswith("!=") or clause.startswith(">") or clause.startswith("<"):
                continue
            count += 1
    return count


# --------------------------------------------------------------------------
# Deployability and environment selection

@dataclass(frozen=True)
class Deployability:
    """Ranking record for one environment variant on one target."""

    compatible: bool
    cache_hit: bool
    specificity: int
    size_cost: int
    tag: str

    def sort_key(self) -> tuple:
        return (not self.cache_hit, -self.specificity, self.size_cost, self.tag)


def score_variant(meta: UniformComponentMeta, eval_map, cached_digests) -> Deployability:
    compatible = requirements_satisfied(meta.requirements, eval_map)
    cache_hit = bool(meta.payload_digest) and meta.payload_digest in cached_digests
    return Deployability(
        compatible=compatible,
        cache_hit=cache_hit,
        specificity=_exact_clause_count(meta.requirements),
        size_cost=0 if cache_hit else meta.payload_size,
        tag=meta.id.environment,
    )


def es_select(variants, eval_map, cached_digests=frozenset()):
    """Pick the most deployable compatible variant, or None.

    Order among compatible variants: cache hits first, then higher
    specificity (count of exact-match requirement clauses), then smaller
    size cost, then environment tag ascending as the deterministic
    tie-break."""
    best = None
    best_key = None
    for meta in variants:
        score = score_variant(meta, eval_map, cached_digests)
        if not score.compatible:
            continue
        key = score.sort_key()
        if best_key is None or key < best_key:
            best, best_key = meta, key
    return best


def build_eval_map(sheet: SpecSheet, context: BuildContext | None = None) -> dict[str, str]:
    """Host sheet overlaid with accumulated build context."""
    eval_map = sheet.as_dict()
    if context is not None:
        eval_map.update(context.as_dict())
    return eval_map


# --------------------------------------------------------------------------
# PyPI platform compatibility tags

_WHEEL_ARCH = {
    "x86_64": "amd64", "i686": "i386", "aarch64": "aarch64", "arm64": "aarch64",
    "armv7l": "armhf", "ppc64le": "ppc64el", "s390x": "s390x", "riscv64": "riscv64",
}
_TAG_ARCH = {"amd64": "x86_64", "i386": "i686", "aarch64": "aarch64",
             "armhf": "armv7l", "ppc64el": "ppc64le", "s390x": "s390x",
             "riscv64": "riscv64"}


def _python_xy(python: str) -> tuple[int, int]:
    match = re.match(r"^(\d+)\.(\d+)", python)
    if not match:
        raise UnsupportedPlatformError(
            f"python version {python!r} has no major.minor")
    return int(match.group(1)), int(match.group(2))


def _glibc_minors(libc: str) -> list[int] | None:
    match = re.fullmatch(r"2\.(\d+)(?:\.\d+)?", libc.strip())
    if not match:
        return None
    return list(range(int(match.group(1)), 4, -1))


def _linux_platforms(cpu: str, libc: str) -> list[str]:
    arch = _TAG_ARCH.get(cpu)
    if arch is None:
        raise UnsupportedPlatformError(f"no wheel platform for cpu {cpu!r}")
    floor = 5 if arch in ("x86_64", "i686") else 17
    platforms: list[str] = []
    minors = _glibc_minors(libc) if libc else None
    if minors is not None:
        for minor in minors:
            if minor < floor:
                break
            platforms.append(f"manylinux_2_{minor}_{arch}")
            if minor == 17:
                platforms.append(f"manylinux2014_{arch}")
            elif minor == 12 and arch in ("x86_64", "i686"):
                platforms.append(f"manylinux2010_{arch}")
            elif minor == 5 and arch in ("x86_64", "i686"):
                platforms.append(f"manylinux1_{arch}")
    platforms.append(f"linux_{arch}")
    return platforms


def pypi_compatible_tags(eval_map) -> list[str]:
    """Enumerate acceptable wheel tags for a target, most specific first.

    Mirrors the PyPA ordering: version-specific cpython tags over every
    platform, the abi3 back-compatibility chain, generic python tags, then
    the pure 'any' fallbacks."""
    os_type = eval_map.get(SHEET_OS, "")
    if os_type != "linux":
        raise UnsupportedPlatformError(f"unsupported target os {os_type!r}")
    python = eval_map.get(SHEET_PYTHON, "")
    if not python:
        raise UnsupportedPlatformError("target has no python version")
    major, minor = _python_xy(python)
    platforms = _linux_platforms(eval_map.get(SHEET_CPU, ""), eval_map.get(SHEET_LIBC, ""))

    tags: list[str] = []
    interp = f"cp{major}{minor}"
    for plat in platforms:
        tags.append(f"{interp}-{interp}-{plat}")
    for plat in platforms:
        tags.append(f"{interp}-abi3-{plat}")
    for plat in platforms:
        tags.append(f"{interp}-none-{plat}")
    for older in range(minor - 1, 1, -1):
        for plat in platforms:
            tags.append(f"cp{major}{older}-abi3-{plat}")
    for plat in platforms:
        tags.append(f"py{major}{minor}-none-{plat}")
    for plat in platforms:
        tags.append(f"py{major}-none-{plat}")
    for older in range(minor - 1, -1, -1):
        for plat in platforms:
            tags.append(f"py{major}{older}-none-{plat}")
    tags.append(f"{interp}-none-any")
    tags.append(f"py{major}{minor}-none-any")
    tags.append(f"py{major}-none-any")
    for older in range(minor - 1, -1, -1):
        tags.append(f"py{major}{older}-none-any")
    return tags


# --------------------------------------------------------------------------
# Requirements derived from upstream environment labels

_IMPOSSIBLE = (("python", "<0"),)


def _interp_python_req(interp: str, abi: str) -> tuple[tuple[str, str], ...] | None:
    match = re.fullmatch(r"(cp|py)(\d)(\d*)", interp)
    if not match:
        return None
    kind, major, minor = match.group(1), int(match.group(2)), match.group(3)
    if kind == "cp":
        if not minor:
            return None
        if abi == "abi3":
            return (("python", f">={major}.{int(minor)}"),)
        # Version-locked CPython ABI (cpXY-cpXY or cpXY-none).
        return (("python", f"=={major}.{int(minor)}.*"),)
    if minor:
        return (("python", f">={major}.{int(minor)},<{major + 1}"),)
    return (("python", f">={major},<{major + 1}"),)


def _platform_reqs(plat: str) -> tuple[tuple[str, str], ...] | None:
    if plat == "any":
        return ()
    match = re.fullmatch(r"manylinux_(\d+)_(\d+)_(\w+)", plat)
    legacy = {"manylinux1": (2, 5), "manylinux2010": (2, 12), "manylinux2014": (2, 17)}
    if not match:
        for prefix, (maj, minor) in legacy.items():
            if plat.startswith(prefix + "_"):
                arch = plat[len(prefix) + 1:]
                match = (maj, minor, arch)
                break
    else:
        match = (int(match.group(1)), int(match.group(2)), match.group(3))
    if isinstance(match, tuple):
        maj, minor, arch = match
        cpu = _WHEEL_ARCH.get(arch)
        if cpu is None:
            return None
        return (("os", "=linux"), ("cpu", f"={cpu}"),
                ("libc", f">={maj}.{minor}"))
    linux = re.fullmatch(r"linux_(\w+)", plat)
    if linux:
        cpu = _WHEEL_ARCH.get(linux.group(1))
        if cpu is None:
            return None
        return (("os", "=linux"), ("cpu", f"={cpu}"))
    musl = re.fullmatch(r"musllinux_(\d+)_(\d+)_(\w+)", plat)
    if musl:
        cpu = _WHEEL_ARCH.get(musl.group(3))
        if cpu is None:
            return None
        return (("os", "=linux"), ("cpu", f"={cpu}"),
                ("libc.musl", f">={musl.group(1)}.{musl.group(2)}"))
    mac = re.fullmatch(r"macosx_(\d+)_(\d+)_(\w+)", plat)
    if mac:
        arch = mac.group(3)
        reqs = [("os", "=macos"), ("os.release", f">={mac.group(1)}.{mac.group(2)}")]
        if arch != "universal2":
            cpu = _WHEEL_ARCH.get(arch)
            if cpu is None:
                return None
            reqs.append(("cpu", f"={cpu}"))
        return tuple(reqs)
    if plat in ("win32", "win_amd64", "win_arm64"):
        cpu = {"win32": "i386", "win_amd64": "amd64", "win_arm64": "aarch64"}[plat]
        return (("os", "=windows"), ("cpu", f"={cpu}"))
    return None


def wheel_tag_requirements(tag: str) -> tuple[tuple[str, str], ...] | None:
    """Derive requirement entries from a (possibly compressed) wheel tag.

    Returns None when no part of the tag is recognizable; such variants
    must be marked unusable by the caller. Compressed tag sets pick the
    first recognizable triple, preferring python 3 interpreters."""
    pieces = tag.strip().split("-")
    if len(pieces) != 3:
        return None
    interps, abis, plats = (piece.split(".") for piece in pieces)
    candidates: list[tuple[tuple[str, str], ...]] = []
    for interp in interps:
        for abi in abis:
            python_req = _interp_python_req(interp, abi)
            if python_req is None:
                continue
            for plat in plats:
                plat_req = _platform_reqs(plat)
                if plat_req is None:
                    continue
                merged: dict[str, list[str]] = {}
                for key, constraint in python_req + plat_req:
                    merged.setdefault(key, []).append(constraint)
                candidates.append(tuple(
                    (key, ",".join(constraints))
                    for key, constraints in merged.items()
                ))
    if not candidates:
        return None

    def prefers_py3(reqs) -> bool:
        return any(key == "python" and not constraint.startswith(">=2")
                   for key, constraint in reqs)

    for reqs in candidates:
        if prefers_py3(reqs):
            return reqs
    return candidates[0]


UNUSABLE_REQUIREMENTS = _IMPOSSIBLE


_DEB_ARCH_CPU = {"amd64": "amd64", "arm64": "aarch64", "armhf": "armhf",
                 "i386": "i386", "ppc64el": "ppc64el", "s390x": "s390x",
                 "riscv64": "riscv64"}


def deb_arch_requirements(arch: str) -> tuple[tuple[str, str], ...]:
    arch = arch.strip().lower()
    if arch == "all":
        return ()
    cpu = _DEB_ARCH_CPU.get(arch, arch)
    return (("os", "=linux"), ("cpu", f"={cpu}"))


_OCI_ARCH_CPU = {"amd64": "amd64", "arm64": "aarch64", "386": "i386",
                 "arm": "armhf", "ppc64le": "ppc64el", "s390x": "s390x",
                 "riscv64": "riscv64"}


def oci_platform_requirements(platform_ref: str) -> tuple[tuple[str, str], ...]:
    """Requirements for an image platform like 'linux/amd64' or
    'linux/arm64/v8'."""
    parts = platform_ref.strip().split("/")
    if len(parts) < 2 or not parts[0] or not parts[1]:
        raise MetadataError(f"bad image platform {platform_ref!r}")
    os_type = parts[0].lower()
    cpu = _OCI_ARCH_CPU.get(parts[1].lower(), parts[1].lower())
    return ((SHEET_OS, f"={os_type}"), (SHEET_CPU, f"={cpu}"))


def oci_env_tag(platform_ref: str) -> str:
    parts = platform_ref.strip().split("/")
    return "/".join(parts[:2])
