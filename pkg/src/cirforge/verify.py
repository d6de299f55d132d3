"""Independent soundness checker for resolution results.

Re-walks the selected components' metadata and re-evaluates every
constraint from scratch, sharing no code with the solver. Used by tests
as the ground-truth judge of solver output and available to callers who
want a second opinion on a lock before building from it.
"""

from __future__ import annotations

from .environment import requirements_satisfied
from .model import (
    BuildContext,
    DependencyItem,
    ManagerKind,
    SpecSheet,
    UniformComponentMeta,
)
from .versions import Version, matches, parse_specifier

__all__ = ["verify_resolution"]


def _label(meta: UniformComponentMeta) -> str:
    return str(meta.id)


def verify_resolution(items, sheet: SpecSheet, components,
                      context: BuildContext | None = None) -> list[str]:
    """Check a component selection against the declared items and sheet.

    Returns a list of violation descriptions; an empty list means the
    selection is sound. items are the root dependency items, components
    the selected set (any order), context the merged build context the
    resolver reported (checked for equality when given).
    """
    violations: list[str] = []
    components = list(components)

    # One component per package.
    by_pkg: dict[tuple[ManagerKind, str], UniformComponentMeta] = {}
    for meta in components:
        pkg = (meta.id.manager, meta.id.name)
        earlier = by_pkg.get(pkg)
        if earlier is not None:
            violations.append(
                f"two components selected for {pkg[0].value}/{pkg[1]}: "
                f"{earlier.id.version} and {meta.id.version}")
        else:
            by_pkg[pkg] = meta

    def covered(item: DependencyItem, origin: str) -> None:
        pkg = (item.manager, item.name)
        meta = by_pkg.get(pkg)
        if meta is None:
            violations.append(f"{origin} needs {item} but no component "
                              "for that package was selected")
            return
        spec = parse_specifier(item.manager, item.specifier)
        version = Version(meta.id.manager, meta.id.version)
        if not matches(spec, version):
            violations.append(f"{origin} needs {item} but the selected "
                              f"{meta.id} does not match")

    # Every declared item and every selected component's own dependencies
    # must be covered by the selection itself.
    items = list(items)
    for item in items:
        covered(item, "the application")
    for meta in components:
        for dep in meta.deps:
            covered(dep, _label(meta))

    # Every selected component must be reachable from the declared items.
    reachable: set[tuple[ManagerKind, str]] = set()
    queue = [(item.manager, item.name) for item in items]
    while queue:
        pkg = queue.pop()
        if pkg in reachable:
            continue
        reachable.add(pkg)
        meta = by_pkg.get(pkg)
        if meta is not None:
            queue.extend((dep.manager, dep.name) for dep in meta.deps)
    for pkg, meta in by_pkg.items():
        if pkg not in reachable:
            violations.append(f"{meta.id} is selected but nothing depends "
                              "on it")

    # A pre-release selection needs some item naming a pre-release for
    # that package (declared or from a selected component).
    for pkg, meta in by_pkg.items():
        version = Version(meta.id.manager, meta.id.version)
        if not version.is_prerelease:
            continue
        wanted = False
        for item in items + [d for m in components for d in m.deps]:
            if (item.manager, item.name) != pkg:
                continue
            if parse_specifier(item.manager, item.specifier).names_prerelease:
                wanted = True
                break
        if not wanted:
            violations.append(
                f"{meta.id} is a pre-release but no dependency item names "
                "a pre-release for it")

    # Context entries must agree pairwise; the merged map is the host
    # sheet overridden by component entries.
    merged = dict(sheet.as_dict())
    source: dict[str, UniformComponentMeta] = {}
    for meta in components:
        for key, value in meta.context.entries:
            owner = source.get(key)
            if owner is not None and dict(owner.context.entries)[key] != value:
                violations.append(
                    f"context key {key!r} set to different values by "
                    f"{owner.id} and {meta.id}")
                continue
            merged[key] = value
            source.setdefault(key, meta)

    if context is not None and dict(context.entries) != merged:
        violations.append(
            "the reported build context does not equal the host sheet "
            "merged with the selected components' context entries")

    # Every selected variant's platform requirements must hold under the
    # final merged context.
    for meta in components:
        if not requirements_satisfied(meta.requirements, merged):
            failing = [f"{key} {constraint}"
                       for key, constraint in meta.requirements
                       if not requirements_satisfied(((key, constraint),),
                                                     merged)]
            violations.append(
                f"{meta.id} requires {', '.join(failing)} which the final "
                "context does not satisfy")

    return violations
