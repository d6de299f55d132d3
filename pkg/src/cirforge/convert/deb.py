"""Debian binary package to uniform component conversion.

A .deb is an ar archive: ``debian-binary``, ``control.tar.*`` (fields and
maintainer scripts), ``data.tar.*`` (the file tree). Conversion keeps the
data tree verbatim under rootfs/ and simulates the effect a whitelisted
subset of maintainer-script commands would have had at install time:

* ``ln -s`` adds symlinks
* ``chmod``/``chown`` adjust recorded permission bits / ownership notes
* ``ldconfig`` emits an ldconfig fragment listing shipped shared objects
* ``adduser``/``addgroup`` (and useradd/groupadd) emit passwd/group
  fragment lines merged at assembly time

Anything outside the whitelist is reported, never executed.
"""

from __future__ import annotations

import posixpath
import re
import shlex
import tarfile
from dataclasses import dataclass, field
from pathlib import Path

from ..archive import Entry, ar_members, open_tar_auto
from ..environment import deb_arch_requirements
from ..errors import ConversionError
from ..model import (
    BuildContext,
    ComponentId,
    DependencyItem,
    ManagerKind,
    UniformComponentMeta,
    canonicalize_name,
)
from ..versions import Version
from . import (
    ConversionReport,
    ConvertedComponent,
    FRAGMENT_PREFIX,
    ROOTFS_PREFIX,
    build_component,
)
from .xdeps import XDeps

__all__ = ["convert_deb", "parse_control_fields", "parse_depends_field"]


def parse_control_fields(text: str) -> dict[str, str]:
    """First paragraph of a deb822 document as a field mapping."""
    fields: dict[str, str] = {}
    current: str | None = None
    for line in text.splitlines():
        if not line.strip():
            if fields:
                break  # only the first paragraph matters in binary control
            continue
        if line[:1] in (" ", "\t") and current is not None:
            fields[current] += "\n" + line.strip()
            continue
        key, sep, value = line.partition(":")
        if not sep or not key.strip():
            raise ConversionError(f"malformed control line {line!r}")
        current = key.strip()
        fields[current] = value.strip()
    return fields


_RELATION_RE = re.compile(r"^(?P<name>[A-Za-z0-9][A-Za-z0-9+.-]*)"
                          r"(?::[a-z0-9-]+)?"          # architecture qualifier
                          r"\s*(?:\((?P<op><<|<=|=|>=|>>|<|>)\s*(?P<ver>[^)]+)\))?")


def parse_depends_field(text: str, report: ConversionReport | None = None
                        ) -> list[tuple[str, str]]:
    """Flatten a Depends-style field into (name, specifier) pairs.

    Alternation groups (``a | b``) keep their first alternative; version
    relations become specifier strings; architecture restriction lists in
    brackets are ignored."""
    out: list[tuple[str, str]] = []
    for group in text.replace("\n", " ").split(","):
        group = group.strip()
        if not group:
            continue
        first = group.split("|")[0].strip()
        first = re.sub(r"\[[^]]*\]", "", first).strip()   # arch restrictions
        first = re.sub(r"<[^>]*>", "", first).strip()     # build profiles
        if not first:
            continue
        if first.startswith("${"):
            if report is not None:
                report.warn(f"unresolved substvar dependency {first!r}")
            continue
        match = _RELATION_RE.match(first)
        if not match:
            raise ConversionError(f"cannot parse dependency {group!r}")
        name = match.group("name")
        if match.group("op"):
            spec = f"{match.group('op')}{match.group('ver').strip()}"
        else:
            spec = "any"
        out.append((name, spec))
    return out


@dataclass
class _ScriptEffects:
    symlinks: dict[str, str] = field(default_factory=dict)
    chmods: list[tuple[str, int]] = field(default_factory=list)
    chowns: list[tuple[str, str]] = field(default_factory=list)
    users: list[str] = field(default_factory=list)
    groups: list[str] = field(default_factory=list)
    ldconfig: bool = False


_SHELL_NOISE = {
    "set", "if", "then", "else", "elif", "fi", "case", "esac", "in",
    "for", "do", "done", "while", "until", "exit", "return", "true",
    "false", ":", "break", "continue", "shift", "[", "[[", "]]", "test",
    "export", "umask", "trap", "eval", ".",
}


def _simulate_script(script_name: str, text: str, effects: _ScriptEffects,
                     report: ConversionReport) -> None:
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        # Break up simple compound statements; good enough for the
        # declarative maintainer scripts this converter accepts.
        for piece in re.split(r";|&&|\|\|", line):
            piece = piece.strip()
            if not piece:
                continue
            try:
                tokens = shlex.split(piece, comments=True)
            except ValueError:
                report.warn(f"{script_name}: unparsable line {piece!r}")
                continue
            if not tokens:
                continue
            _simulate_command(script_name, tokens, effects, report)


def _flags_and_args(tokens: list[str]) -> tuple[set[str], list[str]]:
    flags: set[str] = set()
    args: list[str] = []
    for token in tokens:
        if token.startswith("--"):
            flags.add(token[2:].split("=", 1)[0])
        elif token.startswith("-") and token != "-":
            flags.update(token[1:])
        else:
            args.append(token)
    return flags, args


def _simulate_command(script_name: str, tokens: list[str],
                      effects: _ScriptEffects, report: ConversionReport) -> None:
    command = tokens[0]
    if command in _SHELL_NOISE or command.startswith("$"):
        return
    if any("$" in token for token in tokens):
        report.warn(f"{script_name}: skipping line with shell substitution: "
                    f"{' '.join(tokens)!r}")
        return
    if command == "ln":
        flags, args = _flags_and_args(tokens[1:])
        if "s" not in flags:
            report.warn(f"{script_name}: only symbolic ln is simulated")
            return
        if len(args) != 2:
            report.warn(f"{script_name}: unsupported ln form {tokens!r}")
            return
        target, link = args
        if link.endswith("/"):
            link = link + posixpath.basename(target)
        effects.symlinks[link.lstrip("/")] = target
    elif command == "ldconfig":
        effects.ldconfig = True
    elif command == "chmod":
        flags, args = _flags_and_args(tokens[1:])
        if len(args) < 2 or not re.fullmatch(r"0?[0-7]{3,4}", args[0]):
            report.warn(f"{script_name}: only octal chmod is simulated "
                        f"({' '.join(tokens)!r})")
            return
        mode = int(args[0], 8)
        for path in args[1:]:
            effects.chmods.append((path.lstrip("/"), mode))
    elif command == "chown":
        flags, args = _flags_and_args(tokens[1:])
        if len(args) < 2:
            report.warn(f"{script_name}: unsupported chown form {tokens!r}")
            return
        for path in args[1:]:
            effects.chowns.append((path.lstrip("/"), args[0]))
    elif command in ("adduser", "useradd"):
        _flags, args = _flags_and_args(tokens[1:])
        if args:
            effects.users.append(args[-1])
        else:
            report.warn(f"{script_name}: {command} with no user name")
    elif command in ("addgroup", "groupadd"):
        _flags, args = _flags_and_args(tokens[1:])
        if args:
            effects.groups.append(args[-1])
        else:
            report.warn(f"{script_name}: {command} with no group name")
    else:
        report.warn(f"{script_name}: command not simulated: "
                    f"{' '.join(tokens[:4])!r}")


def _data_entries(data_tar: tarfile.TarFile, report: ConversionReport
                  ) -> list[Entry]:
    entries: dict[str, Entry] = {}
    contents: dict[str, bytes] = {}
    for member in data_tar:
        name = member.name.lstrip("./").strip("/")
        if not name:
            continue
        arc = ROOTFS_PREFIX + name
        if member.isdir():
            entries[arc] = Entry(arc, "dir", member.mode & 0o7777 or 0o755)
        elif member.issym():
            entries[arc] = Entry(arc, "symlink", 0o777, target=member.linkname)
        elif member.isfile():
            data = data_tar.extractfile(member).read()
            contents[name] = data
            entries[arc] = Entry(arc, "file", member.mode & 0o7777, data=data)
        elif member.islnk():
            source = member.linkname.lstrip("./").strip("/")
            if source in contents:
                entries[arc] = Entry(arc, "file", member.mode & 0o7777,
                                     data=contents[source])
            else:
                report.warn(f"hardlink to missing member {member.linkname!r}")
        else:
            report.warn(f"skipping special member {member.name!r}")
    return list(entries.values())


def _apply_effects(entries: list[Entry], effects: _ScriptEffects,
                   report: ConversionReport) -> list[Entry]:
    by_name = {entry.name: entry for entry in entries}
    for link, target in effects.symlinks.items():
        arc = ROOTFS_PREFIX + link
        by_name[arc] = Entry(arc, "symlink", 0o777, target=target)
        report.act(f"symlink {link} -> {target}")
    for path, mode in effects.chmods:
        arc = ROOTFS_PREFIX + path
        entry = by_name.get(arc)
        if entry is None or entry.kind != "file":
            report.warn(f"chmod target not in payload: {path!r}")
            continue
        by_name[arc] = Entry(arc, "file", mode, data=entry.data)
        report.act(f"chmod {oct(mode)} {path}")
    for path, owner in effects.chowns:
        report.act(f"ownership note: {path} -> {owner}")
    return list(by_name.values())


def _fragment_entries(entries: list[Entry], effects: _ScriptEffects,
                      report: ConversionReport) -> list[Entry]:
    fragments: list[Entry] = []
    if effects.users or effects.groups:
        if effects.users:
            lines = "".join(
                f"{user}:x:::{user} (system):/nonexistent:/usr/sbin/nologin\n"
                for user in dict.fromkeys(effects.users))
            fragments.append(Entry(FRAGMENT_PREFIX + "passwd", "file", 0o644,
                                   data=lines.encode()))
        groups = list(dict.fromkeys(effects.groups + effects.users))
        lines = "".join(f"{group}:x::\n" for group in groups)
        fragments.append(Entry(FRAGMENT_PREFIX + "group", "file", 0o644,
                               data=lines.encode()))
        report.act(f"user/group fragments: {effects.users} {groups}")
    if effects.ldconfig:
        shared = sorted(
            "/" + entry.name[len(ROOTFS_PREFIX):]
            for entry in entries
            if entry.kind in ("file", "symlink")
            and "/lib" in "/" + entry.name[len(ROOTFS_PREFIX):].rsplit("/", 1)[0]
            and re.search(r"\.so(\.|$)", entry.name))
        fragments.append(Entry(FRAGMENT_PREFIX + "ldconfig", "file", 0o644,
                               data=("".join(line + "\n" for line in shared)).encode()))
        report.act(f"ldconfig fragment with {len(shared)} entries")
    return fragments


def convert_deb(path: Path, out_dir: Path,
                xdeps: XDeps | None = None) -> ConvertedComponent:
    path = Path(path)
    report = ConversionReport()
    control_blob = data_blob = None
    saw_marker = False
    for member_name, blob in ar_members(path):
        if member_name == "debian-binary":
            saw_marker = True
            if blob.strip() not in (b"2.0",):
                raise ConversionError(f"{path.name}: unsupported deb format "
                                      f"{blob.strip()!r}")
        elif member_name.startswith("control.tar"):
            control_blob = blob
        elif member_name.startswith("data.tar"):
            data_blob = blob
    if not saw_marker or control_blob is None or data_blob is None:
        raise ConversionError(f"{path.name} is not a complete deb archive")

    with open_tar_auto(control_blob, f"{path.name} control member") as control_tar:
        control_files = {
            member.name.lstrip("./"): control_tar.extractfile(member).read()
            for member in control_tar if member.isfile()
        }
    if "control" not in control_files:
        raise ConversionError(f"{path.name} has no control file")
    fields = parse_control_fields(control_files["control"].decode("utf-8"))
    for required in ("Package", "Version", "Architecture"):
        if required not in fields:
            raise ConversionError(f"{path.name}: control lacks {required}")

    name = canonicalize_name(ManagerKind.APT, fields["Package"])
    version = Version(ManagerKind.APT, fields["Version"])
    arch = fields["Architecture"].strip()

    deps = [DependencyItem(ManagerKind.APT, dep_name, spec)
            for dep_name, spec in
            parse_depends_field(fields.get("Depends", ""), report)
            + parse_depends_field(fields.get("Pre-Depends", ""), report)]

    effects = _ScriptEffects()
    for script in ("preinst", "postinst"):
        if script in control_files:
            _simulate_script(
                script, control_files[script].decode("utf-8", "replace"),
                effects, report)

    with open_tar_auto(data_blob, f"{path.name} data member") as data_tar:
        entries = _data_entries(data_tar, report)
    entries = _apply_effects(entries, effects, report)
    entries.extend(_fragment_entries(entries, effects, report))

    provides = [("apt", provided_name) for provided_name, _spec in
                parse_depends_field(fields.get("Provides", ""), report)]

    extra_deps: list[DependencyItem] = []
    context_pairs: list[tuple[str, str]] = []
    if xdeps is not None:
        extra_deps, context_pairs = xdeps.for_component(ManagerKind.APT, name, version)
        for dep in extra_deps:
            report.act(f"injected cross-manager dependency {dep}")

    meta = UniformComponentMeta(
        id=ComponentId(ManagerKind.APT, name, version.canonical, arch),
        deps=tuple(deps) + tuple(extra_deps),
        context=BuildContext(tuple(context_pairs)),
        requirements=deb_arch_requirements(arch),
        provides=tuple(provides),
    )
    return build_component(meta, entries, out_dir, report)
