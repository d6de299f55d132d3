"""Exhaustive satisfiability oracle for generated universes.

Independent of the resolver: plain backtracking over per-package version
choices with a closed-form validity predicate. Shares only the version
matcher with the production code (that engine is vetted separately
against dpkg and the published PEP 440 ordering); requirement evaluation
is re-implemented here for the two constraint shapes universes emit.
"""

from __future__ import annotations

from cirforge.versions import Version, matches, parse_specifier


def _requirement_met(key: str, constraint: str, merged: dict) -> bool:
    value = merged.get(key)
    if value is None:
        return False
    if constraint.startswith(">="):
        want = int(constraint[2:])
        head = str(value).split(".", 1)[0]
        return head.isdigit() and int(head) >= want
    if constraint.startswith("="):
        return value == constraint[1:]
    raise AssertionError(f"oracle cannot evaluate {key} {constraint}")


def _variant_fits(meta, merged: dict) -> bool:
    return all(_requirement_met(key, constraint, merged)
               for key, constraint in meta.requirements)


class _MatchSets:
    """(package, specifier) -> frozenset of accepted canonical versions."""

    def __init__(self, universe):
        self.universe = universe
        self.cache: dict = {}

    def allowed(self, dep) -> frozenset:
        pkg = (dep.manager, dep.name)
        key = (pkg, dep.specifier)
        if key not in self.cache:
            versions = self.universe.metas.get(pkg, {})
            spec = parse_specifier(dep.manager, dep.specifier)
            self.cache[key] = frozenset(
                canonical for canonical in versions
                if matches(spec, Version(dep.manager, canonical)))
        return self.cache[key]


def brute_force_satisfiable(universe, sheet_map: dict) -> bool:
    """True when some assignment of versions satisfies the root items,
    every chosen version's dependencies, pairwise context agreement, and
    per-choice variant fitness under the merged context."""
    packages = universe.packages()
    match = _MatchSets(universe)

    def first_meta(pkg, canonical):
        # deps and context are shared by all variants of a version
        return universe.variants_of(pkg, canonical)[0]

    def valid(assignment: dict) -> bool:
        for item in universe.roots:
            chosen = assignment.get((item.manager, item.name))
            if chosen is None or chosen not in match.allowed(item):
                return False
        seen: dict[str, str] = {}
        for pkg, canonical in assignment.items():
            if canonical is None:
                continue
            meta = first_meta(pkg, canonical)
            for dep in meta.deps:
                chosen = assignment.get((dep.manager, dep.name))
                if chosen is None or chosen not in match.allowed(dep):
                    return False
            for key, value in meta.context.entries:
                if seen.get(key, value) != value:
                    return False
                seen[key] = value
        merged = dict(sheet_map)
        merged.update(seen)
        for pkg, canonical in assignment.items():
            if canonical is None:
                continue
            if not any(_variant_fits(meta, merged)
                       for meta in universe.variants_of(pkg, canonical)):
                return False
        return True

    def contradicted(assignment: dict, pkg, choice) -> bool:
        """Local checks against already-assigned packages; sound, never
        prunes a branch some extension could satisfy."""
        for item in universe.roots:
            if (item.manager, item.name) == pkg:
                if choice is None or choice not in match.allowed(item):
                    return True
        if choice is not None:
            for dep in first_meta(pkg, choice).deps:
                dep_pkg = (dep.manager, dep.name)
                if dep_pkg in assignment:
                    dep_choice = assignment[dep_pkg]
                    if dep_choice is None \
                            or dep_choice not in match.allowed(dep):
                        return True
        for other, other_choice in assignment.items():
            if other == pkg or other_choice is None:
                continue
            for dep in first_meta(other, other_choice).deps:
                if (dep.manager, dep.name) == pkg:
                    if choice is None or choice not in match.allowed(dep):
                        return True
        return False

    def search(index: int, assignment: dict) -> bool:
        if index == len(packages):
            return valid(assignment)
        pkg = packages[index]
        for choice in [None] + universe.versions_of(pkg):
            assignment[pkg] = choice
            if contradicted(assignment, pkg, choice):
                continue
            if search(index + 1, assignment):
                return True
        del assignment[pkg]
        return False

    return search(0, {})
