"""Cross-manager dependency overrides applied at conversion time.

Upstream metadata can only name dependencies inside its own ecosystem; a
wheel has no way to say it needs an Apt library. An override file closes
that gap. Line format, rules separated by [FOR] headers::

    [FOR] PyPI opencv-python ==4.10.0.84
    [DEP] Apt libgl1-mesa-glx any
    [DEP] Apt libglib2.0-0 any
    [CONTEXT] opencv.version {version}

    [FOR] OciImage python any
    [CONTEXT] python {version}

A rule applies to a component when manager and canonical name match and
the rule's specifier accepts the component version. ``{version}`` inside a
[DEP] specifier or [CONTEXT] value expands to the component's canonical
version.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..errors import MetadataError
from ..model import DependencyItem, ManagerKind, canonicalize_name
from ..versions import Specifier, Version, matches, parse_specifier

__all__ = ["XDeps", "XDepsRule"]


@dataclass(frozen=True)
class XDepsRule:
    manager: ManagerKind
    name: str
    specifier: Specifier
    deps: tuple[tuple[ManagerKind, str, str], ...] = ()
    context: tuple[tuple[str, str], ...] = ()


@dataclass
class XDeps:
    rules: list[XDepsRule] = field(default_factory=list)

    @classmethod
    def load(cls, path: Path) -> "XDeps":
        return cls.parse(Path(path).read_text(encoding="utf-8"), source=str(path))

    @classmethod
    def parse(cls, text: str, source: str = "<xdeps>") -> "XDeps":
        rules: list[XDepsRule] = []
        header: tuple[ManagerKind, str, Specifier] | None = None
        deps: list[tuple[ManagerKind, str, str]] = []
        context: list[tuple[str, str]] = []

        def flush():
            nonlocal header, deps, context
            if header is not None:
                rules.append(XDepsRule(header[0], header[1], header[2],
                                       tuple(deps), tuple(context)))
            header, deps, context = None, [], []

        for lineno, raw_line in enumerate(text.splitlines(), 1):
            line = raw_line.strip()
            if not line or line.startswith("#"):
                continue
            where = f"{source}:{lineno}"
            if line.startswith("[FOR]"):
                flush()
                fields = line[len("[FOR]"):].split(None, 2)
                if len(fields) != 3:
                    raise MetadataError(f"{where}: malformed [FOR] line")
                manager = ManagerKind.parse(fields[0])
                name = canonicalize_name(manager, fields[1])
                header = (manager, name, parse_specifier(manager, fields[2]))
            elif line.startswith("[DEP]"):
                if header is None:
                    raise MetadataError(f"{where}: [DEP] before any [FOR]")
                fields = line[len("[DEP]"):].split(None, 2)
                if len(fields) != 3:
                    raise MetadataError(f"{where}: malformed [DEP] line")
                manager = ManagerKind.parse(fields[0])
                deps.append((manager, canonicalize_name(manager, fields[1]), fields[2]))
            elif line.startswith("[CONTEXT]"):
                if header is None:
                    raise MetadataError(f"{where}: [CONTEXT] before any [FOR]")
                fields = line[len("[CONTEXT]"):].split(None, 1)
                if len(fields) != 2:
                    raise MetadataError(f"{where}: malformed [CONTEXT] line")
                context.append((fields[0], fields[1]))
            else:
                raise MetadataError(f"{where}: unknown line {line!r}")
        flush()
        return cls(rules)

    def for_component(self, manager: ManagerKind, name: str,
                      version: Version) -> tuple[list[DependencyItem],
                                                 list[tuple[str, str]]]:
        """Dependencies and context entries every matching rule injects."""
        extra_deps: list[DependencyItem] = []
        extra_context: list[tuple[str, str]] = []
        for rule in self.rules:
            if rule.manager is not manager or rule.name != name:
                continue
            if not matches(rule.specifier, version):
                continue
            for dep_manager, dep_name, dep_spec in rule.deps:
                spec = dep_spec.replace("{version}", version.canonical)
                extra_deps.append(DependencyItem(dep_manager, dep_name, spec))
            for key, value in rule.context:
                extra_context.append((key, value.replace("{version}", version.canonical)))
        return extra_deps, extra_context
