"""Wheel to uniform component conversion.

A wheel is a zip with a ``<dist>-<version>.dist-info/`` directory holding
METADATA (core metadata fields) and WHEEL (tag information). Conversion
relocates the archive into a site-packages tree, materializes console
script launchers, translates Requires-Dist into dependency items (PEP 508
markers are evaluated against the conversion target, dropped dependencies
are reported), and derives platform requirements from the wheel tag.
"""

from __future__ import annotations

import configparser
import re
import zipfile
from email.parser import BytesHeaderParser
from pathlib import Path

from packaging.markers import default_environment
from packaging.requirements import InvalidRequirement, Requirement

from ..archive import Entry
from ..environment import (
    UNUSABLE_REQUIREMENTS,
    wheel_tag_requirements,
)
from ..errors import ConversionError
from ..model import (
    BuildContext,
    ComponentId,
    DependencyItem,
    ManagerKind,
    SpecSheet,
    UniformComponentMeta,
    canonicalize_name,
)
from ..versions import Version
from . import ConversionReport, ConvertedComponent, ROOTFS_PREFIX, build_component
from .xdeps import XDeps

__all__ = ["convert_wheel", "parse_wheel_filename", "SITE_PACKAGES"]

SITE_PACKAGES = "usr/lib/python3/site-packages"
_MACHINE_FOR_CPU = {"amd64": "x86_64", "aarch64": "aarch64", "i386": "i686",
                    "armhf": "armv7l", "ppc64el": "ppc64le", "s390x": "s390x"}

_WHEEL_FILE_RE = re.compile(
    r"^(?P<name>[^-]+(?:-[^-]*?)??)-(?P<version>[^-]+?)"
    r"(?:-(?P<build>\d[^-]*))?-(?P<tags>[^-]+-[^-]+-[^-]+)\.whl$"
)


def parse_wheel_filename(filename: str) -> tuple[str, str, str]:
    """Return (raw name, raw version, compressed tag) from a wheel file name."""
    parts = filename[:-4].split("-") if filename.endswith(".whl") else []
    if len(parts) < 5:
        raise ConversionError(f"not a wheel file name: {filename!r}")
    tag = "-".join(parts[-3:])
    head = parts[:-3]
    if len(head) == 3:  # name-version-build
        name, version, _build = head
    elif len(head) == 2:
        name, version = head
    else:
        # Names with hyphens are not canonical in file names; recover by
        # treating everything before the version-looking part as the name.
        name, version = "-".join(head[:-1]), head[-1]
    if not name or not version:
        raise ConversionError(f"not a wheel file name: {filename!r}")
    return name, version, tag


def _marker_environment(sheet: SpecSheet, tag: str) -> dict[str, str]:
    """PEP 508 evaluation environment for the conversion target. The
    machine/platform facts follow the wheel's own tag when it names one."""
    env = dict(default_environment())
    python = sheet.python or "3"
    pieces = python.split(".")
    env["python_version"] = ".".join(pieces[:2])
    env["python_full_version"] = python if len(pieces) >= 3 else f"{python}.0"
    env["implementation_version"] = env["python_full_version"]
    env["implementation_name"] = "cpython"
    env["platform_python_implementation"] = "CPython"
    os_type = sheet.os
    env["os_name"] = "nt" if os_type == "windows" else "posix"
    env["sys_platform"] = {"linux": "linux", "macos": "darwin",
                           "windows": "win32"}.get(os_type, os_type)
    env["platform_system"] = {"linux": "Linux", "macos": "Darwin",
                              "windows": "Windows"}.get(os_type, os_type)
    env["platform_machine"] = _MACHINE_FOR_CPU.get(sheet.cpu, sheet.cpu)
    plat = tag.rsplit("-", 1)[-1]
    arch_match = re.search(r"_(x86_64|i686|aarch64|armv7l|ppc64le|s390x|riscv64)$", plat)
    if arch_match:
        env["platform_machine"] = arch_match.group(1)
    env["extra"] = ""
    return env


_LAUNCHER = """\
#!/usr/bin/env python3
import sys

from {module} import {first_attr}

if __name__ == "__main__":
    sys.exit({call}())
"""


def _launcher_script(target: str) -> bytes:
    module, _, attrs = target.partition(":")
    module = module.strip()
    attrs = attrs.strip()
    if not module or not attrs:
        raise ConversionError(f"bad console script target {target!r}")
    first = attrs.split(".")[0]
    return _LAUNCHER.format(module=module, first_attr=first, call=attrs).encode()


def convert_wheel(path: Path, sheet: SpecSheet, out_dir: Path,
                  xdeps: XDeps | None = None) -> ConvertedComponent:
    path = Path(path)
    report = ConversionReport()
    _file_name, _file_version, tag = parse_wheel_filename(path.name)

    with zipfile.ZipFile(path) as wheel:
        names = wheel.namelist()
        dist_info = _find_dist_info(names, path)
        metadata_name = f"{dist_info}/METADATA"
        wheel_file = f"{dist_info}/WHEEL"
        if metadata_name not in names:
            raise ConversionError(f"{path.name} has no {metadata_name}")
        if wheel_file not in names:
            raise ConversionError(f"{path.name} has no {wheel_file}")
        metadata = BytesHeaderParser().parsebytes(wheel.read(metadata_name))
        name = canonicalize_name(ManagerKind.PYPI, metadata.get("Name", ""))
        version = Version(ManagerKind.PYPI, metadata.get("Version", ""))

        marker_env = _marker_environment(sheet, tag)
        deps: list[DependencyItem] = []
        for raw in metadata.get_all("Requires-Dist") or []:
            try:
                requirement = Requirement(raw)
            except InvalidRequirement as exc:
                report.warn(f"unparsable Requires-Dist {raw!r}: {exc}")
                continue
            if requirement.marker is not None and not requirement.marker.evaluate(marker_env):
                report.dropped_deps.append(raw)
                continue
            if requirement.extras:
                report.warn(f"dropping extras {sorted(requirement.extras)} of "
                            f"dependency {requirement.name}")
            spec = str(requirement.specifier) or "any"
            deps.append(DependencyItem(ManagerKind.PYPI, requirement.name, spec))

        requirements = wheel_tag_requirements(tag)
        if requirements is None:
            report.warn(f"unrecognized wheel tag {tag!r}; variant marked unusable")
            requirements = UNUSABLE_REQUIREMENTS
        for raw in metadata.get_all("Requires-Python") or []:
            for clause in raw.split(","):
                clause = clause.strip().replace(" ", "")
                if clause:
                    requirements = requirements + (("python", clause),)

        entries = _payload_entries(wheel, names, dist_info, report)
        entries.extend(_console_scripts(wheel, names, dist_info, report))
        provides = _provided_modules(wheel, names, dist_info)

    extra_deps: list[DependencyItem] = []
    context_pairs: list[tuple[str, str]] = []
    if xdeps is not None:
        extra_deps, context_pairs = xdeps.for_component(ManagerKind.PYPI, name, version)
        for dep in extra_deps:
            report.act(f"injected cross-manager dependency {dep}")

    meta = UniformComponentMeta(
        id=ComponentId(ManagerKind.PYPI, name, version.canonical, tag),
        deps=tuple(deps) + tuple(extra_deps),
        context=BuildContext(tuple(context_pairs)),
        requirements=requirements,
        provides=tuple(("module", module) for module in sorted(provides)),
    )
    return build_component(meta, entries, out_dir, report)


def _find_dist_info(names: list[str], path: Path) -> str:
    candidates = sorted({name.split("/", 1)[0] for name in names
                         if name.endswith(".dist-info/METADATA") and name.count("/") == 1})
    if not candidates:
        raise ConversionError(f"{path.name} has no dist-info directory")
    if len(candidates) > 1:
        raise ConversionError(f"{path.name} has several dist-info directories")
    return candidates[0]


def _zip_mode(info: zipfile.ZipInfo, default: int) -> int:
    mode = (info.external_attr >> 16) & 0o7777
    return mode if mode else default


def _payload_entries(wheel: zipfile.ZipFile, names: list[str],
                     dist_info: str, report: ConversionReport) -> list[Entry]:
    data_dir = dist_info[:-len(".dist-info")] + ".data"
    entries: list[Entry] = []
    dirs: set[str] = set()

    def add_parents(arc: str) -> None:
        parent = arc.rsplit("/", 1)[0] if "/" in arc else ""
        while parent and parent not in dirs:
            dirs.add(parent)
            parent = parent.rsplit("/", 1)[0] if "/" in parent else ""

    for member in names:
        if member.endswith("/"):
            continue
        info = wheel.getinfo(member)
        data = wheel.read(member)
        if member.startswith(data_dir + "/"):
            section_path = member[len(data_dir) + 1:]
            section, _, rest = section_path.partition("/")
            if not rest:
                continue
            if section == "scripts":
                if data.startswith(b"#!python"):
                    data = b"#!/usr/bin/env python3" + data[len(b"#!python"):]
                arc = f"{ROOTFS_PREFIX}usr/bin/{rest}"
                entries.append(Entry(arc, "file", 0o755, data=data))
            elif section in ("purelib", "platlib"):
                arc = f"{ROOTFS_PREFIX}{SITE_PACKAGES}/{rest}"
                entries.append(Entry(arc, "file", _zip_mode(info, 0o644), data=data))
            elif section == "data":
                arc = f"{ROOTFS_PREFIX}{rest}"
                entries.append(Entry(arc, "file", _zip_mode(info, 0o644), data=data))
            else:
                report.warn(f"ignoring data section {section!r}")
                continue
        else:
            arc = f"{ROOTFS_PREFIX}{SITE_PACKAGES}/{member}"
            entries.append(Entry(arc, "file", _zip_mode(info, 0o644), data=data))
        add_parents(entries[-1].name)

    entries.extend(Entry(d, "dir", 0o755) for d in dirs)
    return entries


def _console_scripts(wheel: zipfile.ZipFile, names: list[str],
                     dist_info: str, report: ConversionReport) -> list[Entry]:
    ep_name = f"{dist_info}/entry_points.txt"
    if ep_name not in names:
        return []
    parser = configparser.ConfigParser()
    try:
        parser.read_string(wheel.read(ep_name).decode("utf-8"))
    except (UnicodeDecodeError, configparser.Error) as exc:
        report.warn(f"unreadable entry_points.txt: {exc}")
        return []
    if not parser.has_section("console_scripts"):
        return []
    entries = []
    for script, target in parser.items("console_scripts"):
        try:
            body = _launcher_script(target)
        except ConversionError as exc:
            report.warn(str(exc))
            continue
        entries.append(Entry(f"{ROOTFS_PREFIX}usr/bin/{script}", "file", 0o755,
                             data=body))
        report.act(f"materialized console script {script} -> {target}")
    return entries


def _provided_modules(wheel: zipfile.ZipFile, names: list[str],
                      dist_info: str) -> set[str]:
    top_level = f"{dist_info}/top_level.txt"
    if top_level in names:
        text = wheel.read(top_level).decode("utf-8", "replace")
        return {line.strip() for line in text.splitlines() if line.strip()}
    modules: set[str] = set()
    data_dir = dist_info[:-len(".dist-info")] + ".data"
    for member in names:
        if member.startswith((dist_info + "/", data_dir + "/")):
            continue
        first, _, rest = member.partition("/")
        if rest:
            if "." not in first:
                modules.add(first)
        elif first.endswith(".py"):
            modules.add(first[:-3])
    return modules
