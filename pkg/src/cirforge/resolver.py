"""Dependency resolution: breadth-first tree expansion driven by a
conflict-driven clause-learning core over finite version sets.

Packages are (manager, name) pairs; the candidate versions of a package
are whatever the registry lists, so every constraint reduces to a finite
set of admissible canonical versions. Constraints are incompatibilities:
sets of terms that can never all hold. A dependency edge "p@v needs q in
S" is the incompatibility {p in {v}, q not in S}; a context clash between
two concrete components is {p in {v}, q in {w}}; learned clauses come out
of conflict resolution. Unit propagation narrows per-package candidate
sets, decisions pick the newest admissible version whose best environment
variant is compatible, conflicts backjump and learn.

Decision order follows the breadth-first dependency tree: manifest order
for the root items, then child declaration order per resolved component.
The tree is replayed from the current decisions whenever the next decision
is needed, so backjumps can never desynchronize tree and solver state. An
item whose package is already decided compatibly is satisfied by that
earlier component and adds no node (first-resolved wins); an incompatible
item surfaces as a conflict instead.

Pre-release policy: a pre-release version is admissible for a package only
while some dependency item in the current tree names a pre-release
explicitly. When the gate (rather than the constraints) empties a
candidate set, the learned clause treats the gated-out versions as
unselectable, which can under-approximate in the corner where a
not-yet-discovered dependent would have named them; deterministic builds
never hit that corner, and the error spells out that the gate fired.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .environment import build_eval_map, es_select, requirements_satisfied
from .errors import NotFoundError, ResolutionError, UsageError
from .model import (
    BuildContext,
    ComponentId,
    DependencyItem,
    ManagerKind,
    SpecSheet,
    UniformComponentMeta,
)
from .versions import (
    Version,
    eligible_versions,
    matches,
    parse_specifier,
    sort_versions,
    vs_select,
)

__all__ = [
    "DependencyNode",
    "ResolutionResult",
    "resolve",
    "select_component",
    "satisfied_by",
    "StoreOnlyClient",
]

_ROOT = (ManagerKind.LOCAL, "")  # synthetic package holding the root items
_ROOT_VERSION = "0"


def _pkg_sort_key(pkg: tuple) -> tuple[str, str]:
    return (pkg[0].value, pkg[1])


def satisfied_by(item: DependencyItem, components) -> bool:
    """True iff an already-selected component covers the item: same manager
    and name, version matching the item's specifier."""
    spec = parse_specifier(item.manager, item.specifier)
    for entry in components:
        cid = entry.id if isinstance(entry, UniformComponentMeta) else entry
        if cid.manager is item.manager and cid.name == item.name:
            if matches(spec, Version(cid.manager, cid.version)):
                return True
    return False


def select_component(item: DependencyItem, sheet: SpecSheet, client,
                     store=None, context: BuildContext | None = None):
    """Single-item selection: walk versions newest-first until one offers a
    compatible environment variant; error when the list runs out."""
    spec = parse_specifier(item.manager, item.specifier)
    eval_map = build_eval_map(sheet, context)
    cached = store.cached_digests() if store is not None else frozenset()
    candidates = list(eligible_versions(client.versions(item.manager, item.name),
                                        spec))
    while True:
        version = vs_select(candidates, spec)
        if version is None:
            raise ResolutionError(
                f"no component satisfies {item}: every candidate version was "
                "filtered out or offers no compatible environment variant")
        chosen = es_select(client.variants(item.manager, item.name, version),
                           eval_map, cached)
        if chosen is not None:
            return chosen
        candidates = [v for v in candidates if v is not version]


# ----------------------------------------------------------------------------
# Terms, incompatibilities, assignments

@dataclass(frozen=True)
class _Term:
    """positive: package selected with version in vset.
    negative: the negation (an unselected package counts as satisfying)."""

    pkg: tuple[ManagerKind, str]
    vset: frozenset[str]
    positive: bool

    def negate(self) -> "_Term":
        return _Term(self.pkg, self.vset, not self.positive)


def _term_and(a: _Term, b: _Term) -> _Term:
    """Conjunction of two terms on the same package."""
    if a.pkg != b.pkg:
        raise UsageError("term conjunction across packages")
    if a.positive and b.positive:
        return _Term(a.pkg, a.vset & b.vset, True)
    if a.positive:
        return _Term(a.pkg, a.vset - b.vset, True)
    if b.positive:
        return _Term(a.pkg, b.vset - a.vset, True)
    return _Term(a.pkg, a.vset | b.vset, False)


class _Incompatibility:
    """Terms (at most one per package) that can never all hold. cause is a
    labeled tuple; derived causes link the two parent incompatibilities."""

    __slots__ = ("terms", "cause", "key")

    def __init__(self, terms: dict, cause):
        self.terms = terms
        self.cause = cause
        self.key = frozenset((t.pkg, t.vset, t.positive) for t in terms.values())

    def is_failure(self) -> bool:
        if not self.terms:
            return True
        if len(self.terms) == 1:
            term = next(iter(self.terms.values()))
            return term.pkg == _ROOT and term.positive
        return False


_SATISFIED = 1
_CONTRADICTED = -1
_INCONCLUSIVE = 0


@dataclass
class _Assignment:
    term: _Term
    level: int
    cause: _Incompatibility | None       # None marks a decision
    meta: UniformComponentMeta | None    # decisions carry the chosen variant

    @property
    def is_decision(self) -> bool:
        return self.cause is None


class _StateMap:
    """Per-package (has_positive, allowed) view of an assignment list."""

    def __init__(self, universe_of):
        self._universe_of = universe_of
        self._state: dict[tuple, tuple[bool, frozenset]] = {}

    def add(self, term: _Term) -> None:
        has_positive, allowed = self.get(term.pkg)
        if term.positive:
            self._state[term.pkg] = (True, allowed & term.vset)
        else:
            self._state[term.pkg] = (has_positive, allowed - term.vset)

    def get(self, pkg: tuple) -> tuple[bool, frozenset]:
        found = self._state.get(pkg)
        if found is None:
            found = (False, frozenset(self._universe_of(pkg)))
            self._state[pkg] = found
        return found

    def term_state(self, term: _Term) -> int:
        has_positive, allowed = self.get(term.pkg)
        overlap = bool(allowed & term.vset)
        covers = allowed <= term.vset
        if term.positive:
            if not overlap:
                return _CONTRADICTED
            if has_positive and covers:
                return _SATISFIED
            return _INCONCLUSIVE
        if not overlap:
            return _SATISFIED
        if has_positive and covers:
            return _CONTRADICTED
        return _INCONCLUSIVE


@dataclass
class DependencyNode:
    """One node of the breadth-first dependency tree."""

    item: DependencyItem
    origin: ComponentId | str            # parent component id or "root"
    resolved: ComponentId | None = None
    children: list["DependencyNode"] = field(default_factory=list)


@dataclass
class ResolutionResult:
    components: list[UniformComponentMeta]   # breadth-first discovery order
    context: BuildContext                    # host facts + component entries
    tree: list[DependencyNode]               # nodes for the root items

    @property
    def ids(self) -> list[ComponentId]:
        return [meta.id for meta in self.components]

    def serialize(self) -> str:
        lines = [f"{meta.id} sha256:{meta.payload_digest}"
                 for meta in self.components]
        lines.extend(f"{key} {value}" for key, value in self.context.entries)
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# Solver

class _Solver:
    def __init__(self, root_items, sheet: SpecSheet, client, store,
                 on_decide, max_decisions: int):
        self.root_items = list(root_items)
        self.sheet = sheet
        self.client = client
        self.store = store
        self.on_decide = on_decide
        self.max_decisions = max_decisions
        self.assignments: list[_Assignment] = []
        self.level = 0
        self.decisions: dict[tuple, _Assignment] = {}
        self.incompats_by_pkg: dict[tuple, list[_Incompatibility]] = {}
        self.seen_incompat_keys: set[frozenset] = set()
        self.universes: dict[tuple, dict[str, Version]] = {}
        self.variant_cache: dict[tuple, list[UniformComponentMeta]] = {}
        self.dep_clauses_done: set[tuple] = set()
        self.decision_count = 0

    # -- registry access, memoized -------------------------------------------

    def universe(self, pkg: tuple) -> dict[str, Version]:
        cached = self.universes.get(pkg)
        if cached is None:
            if pkg == _ROOT:
                cached = {_ROOT_VERSION: None}
            else:
                cached = {}
                for version in self.client.versions(pkg[0], pkg[1]):
                    cached.setdefault(version.canonical, version)
            self.universes[pkg] = cached
        return cached

    def variants_of(self, pkg: tuple, canonical: str):
        key = (pkg, canonical)
        cached = self.variant_cache.get(key)
        if cached is None:
            cached = self.client.variants(pkg[0], pkg[1],
                                          self.universe(pkg)[canonical])
            self.variant_cache[key] = cached
        return cached

    def matching_set(self, pkg: tuple, spec) -> frozenset[str]:
        return frozenset(
            canonical for canonical, version in self.universe(pkg).items()
            if matches(spec, version))

    # -- assignment state -----------------------------------------------------

    def _full_state(self) -> _StateMap:
        state = _StateMap(self.universe)
        for assignment in self.assignments:
            state.add(assignment.term)
        return state

    def _backtrack(self, level: int) -> None:
        self.assignments = [a for a in self.assignments if a.level <= level]
        self.level = level
        self.decisions = {a.term.pkg: a for a in self.assignments
                          if a.is_decision}

    def _assign(self, term: _Term, cause, meta=None) -> None:
        assignment = _Assignment(term, self.level, cause, meta)
        self.assignments.append(assignment)
        if assignment.is_decision:
            self.decisions[term.pkg] = assignment

    # -- incompatibility bookkeeping --------------------------------------------

    def _make_incompat(self, terms_list, cause) -> _Incompatibility | None:
        """AND-merge same-package terms, drop vacuous ones. None means the
        incompatibility can never fire (it contains an always-false term)."""
        merged: dict[tuple, _Term] = {}
        for term in terms_list:
            merged[term.pkg] = (_term_and(merged[term.pkg], term)
                                if term.pkg in merged else term)
        final: dict[tuple, _Term] = {}
        for pkg, term in merged.items():
            if not term.vset:
                if term.positive:
                    return None      # always-false conjunct: vacuous clause
                continue             # negative empty set is always true
            final[pkg] = term
        return _Incompatibility(final, cause)

    def _add_incompat(self, incompat: _Incompatibility) -> _Incompatibility:
        if incompat.key in self.seen_incompat_keys:
            for pkg in incompat.terms:
                for existing in self.incompats_by_pkg.get(pkg, ()):
                    if existing.key == incompat.key:
                        return existing
        self.seen_incompat_keys.add(incompat.key)
        for pkg in incompat.terms:
            self.incompats_by_pkg.setdefault(pkg, []).append(incompat)
        return incompat

    def _add_dependency_clauses(self, pkg: tuple, canonical: str,
                                environment: str, items) -> list[tuple]:
        """One incompatibility per dependency item of a concrete variant.
        Returns the packages touched."""
        done_key = (pkg, canonical, environment)
        if done_key in self.dep_clauses_done:
            return []
        self.dep_clauses_done.add(done_key)
        touched = []
        for item in items:
            target = (item.manager, item.name)
            spec = parse_specifier(item.manager, item.specifier)
            incompat = self._make_incompat(
                [_Term(pkg, frozenset({canonical}), True),
                 _Term(target, self.matching_set(target, spec), False)],
                ("dependency", pkg, canonical, item))
            if incompat is not None:
                self._add_incompat(incompat)
                touched.append(target)
        return touched

    # -- unit propagation --------------------------------------------------------

    def _propagate(self, changed) -> _Incompatibility | None:
        """Propagate until fixpoint; returns a satisfied (conflicting)
        incompatibility or None."""
        queue = sorted(set(changed), key=_pkg_sort_key)
        while queue:
            pkg = queue.pop(0)
            for incompat in list(self.incompats_by_pkg.get(pkg, ())):
                state = self._full_state()
                open_term = None
                all_satisfied = True
                skip = False
                for term in incompat.terms.values():
                    verdict = state.term_state(term)
                    if verdict == _CONTRADICTED:
                        skip = True
                        break
                    if verdict == _INCONCLUSIVE:
                        all_satisfied = False
                        if open_term is not None:
                            skip = True
                            break
                        open_term = term
                if skip:
                    continue
                if all_satisfied:
                    return incompat
                self._assign(open_term.negate(), incompat)
                if open_term.pkg not in queue:
                    queue.append(open_term.pkg)
        return None

    # -- conflict resolution --------------------------------------------------------

    def _after_conflict(self, conflict: _Incompatibility) -> None:
        while conflict is not None:
            learned = self._resolve_conflict(conflict)
            conflict = self._propagate(learned.terms.keys())

    def _resolve_conflict(self, incompat: _Incompatibility) -> _Incompatibility:
        while True:
            if incompat.is_failure():
                raise self._failure(incompat)
            satisfier_index = self._find_satisfier(incompat)
            satisfier = self.assignments[satisfier_index]
            term = incompat.terms[satisfier.term.pkg]
            previous_level = self._previous_satisfier_level(
                incompat, satisfier_index)
            if satisfier.is_decision or previous_level < satisfier.level:
                self._backtrack(previous_level)
                return self._add_incompat(incompat)
            new_terms = [t for p, t in incompat.terms.items()
                         if p != satisfier.term.pkg]
            new_terms.extend(t for p, t in satisfier.cause.terms.items()
                             if p != satisfier.term.pkg)
            if not self._term_satisfies(satisfier.term, term):
                difference = _term_and(satisfier.term, term.negate())
                if difference.vset:
                    new_terms.append(difference.negate())
            merged = self._make_incompat(
                new_terms, ("derived", incompat, satisfier.cause))
            if merged is None:
                raise self._failure(incompat)
            incompat = merged

    def _term_satisfies(self, assignment_term: _Term, term: _Term) -> bool:
        """Does assignment_term alone imply term?"""
        if assignment_term.positive:
            if term.positive:
                return assignment_term.vset <= term.vset
            return not (assignment_term.vset & term.vset)
        if term.positive:
            return False
        return term.vset <= assignment_term.vset

    def _find_satisfier(self, incompat: _Incompatibility) -> int:
        """Index of the earliest assignment whose prefix satisfies the
        incompatibility."""
        state = _StateMap(self.universe)
        pkgs = set(incompat.terms)
        for index, assignment in enumerate(self.assignments):
            state.add(assignment.term)
            if assignment.term.pkg not in pkgs:
                continue
            if all(state.term_state(term) == _SATISFIED
                   for term in incompat.terms.values()):
                return index
        raise ResolutionError("internal error: conflict without satisfier")

    def _previous_satisfier_level(self, incompat: _Incompatibility,
                                  satisfier_index: int) -> int:
        satisfier = self.assignments[satisfier_index]
        state = _StateMap(self.universe)
        state.add(satisfier.term)
        for index in range(satisfier_index):
            assignment = self.assignments[index]
            state.add(assignment.term)
            if all(state.term_state(term) == _SATISFIED
                   for term in incompat.terms.values()):
                return assignment.level
        return 0

    # -- failure reporting ---------------------------------------------------------

    def _failure(self, incompat: _Incompatibility) -> ResolutionError:
        lines: list[str] = []
        seen: set[int] = set()

        def pkg_label(pkg: tuple) -> str:
            return "the application" if pkg == _ROOT else f"{pkg[0].value}/{pkg[1]}"

        def describe(inc: _Incompatibility) -> str:
            if not inc.terms:
                return "the dependency set is unsatisfiable"
            parts = []
            for term in inc.terms.values():
                if term.pkg == _ROOT:
                    parts.append("the application is built"
                                 if term.positive else
                                 "the application is not built")
                    continue
                versions = ", ".join(sorted(term.vset))
                phrase = "is one of" if term.positive else "is none of"
                parts.append(f"{pkg_label(term.pkg)} {phrase} {{{versions}}}")
            return "it is impossible that " + " and ".join(parts)

        def walk(inc: _Incompatibility, depth: int) -> None:
            if id(inc) in seen or depth > 16:
                return
            seen.add(id(inc))
            indent = "  " * depth
            cause = inc.cause
            if cause[0] == "derived":
                lines.append(f"{indent}{describe(inc)}, because:")
                walk(cause[1], depth + 1)
                walk(cause[2], depth + 1)
            elif cause[0] == "dependency":
                _label, pkg, canonical, item = cause
                owner = (pkg_label(pkg) if pkg == _ROOT
                         else f"{pkg_label(pkg)} {canonical}")
                lines.append(f"{indent}{owner} depends on {item}")
            else:
                detail = "; ".join(str(part) for part in cause[1:])
                lines.append(f"{indent}{describe(inc)} ({cause[0]}"
                             + (f": {detail}" if detail else "") + ")")

        walk(incompat, 0)
        return ResolutionError("dependencies are unsatisfiable:\n"
                               + "\n".join(lines),
                               derivation=tuple(lines))

    # -- tree replay ------------------------------------------------------------

    def _replay(self):
        """Rebuild the dependency tree from current decisions.

        Returns (root nodes, metas in discovery order, first undecided
        package or None, per-package pre-release naming flags)."""
        roots: list[DependencyNode] = []
        order: list[UniformComponentMeta] = []
        resolved: set[tuple] = set()
        naming: dict[tuple, bool] = {}
        frontier: tuple | None = None
        queue: list[tuple[DependencyItem, object, list]] = [
            (item, "root", roots) for item in self.root_items]
        while queue:
            item, origin, bucket = queue.pop(0)
            pkg = (item.manager, item.name)
            spec = parse_specifier(item.manager, item.specifier)
            naming[pkg] = naming.get(pkg, False) or spec.names_prerelease
            decision = self.decisions.get(pkg)
            if decision is None or decision.meta is None:
                if frontier is None and pkg != _ROOT:
                    frontier = pkg
                continue
            if pkg in resolved:
                continue      # first-resolved wins; duplicate items add no node
            resolved.add(pkg)
            meta = decision.meta
            node = DependencyNode(item, origin, resolved=meta.id)
            bucket.append(node)
            order.append(meta)
            for child in meta.deps:
                queue.append((child, meta.id, node.children))
        return roots, order, frontier, naming

    # -- context handling ----------------------------------------------------------

    def _context_mapping(self, metas) -> tuple[dict, dict]:
        """Host sheet facts overlaid with component context entries.
        Component entries win over host probes; caller guarantees the metas
        are pairwise clash-free. provider maps key -> supplying component."""
        mapping = dict(self.sheet.as_dict())
        provider: dict[str, ComponentId] = {}
        for meta in metas:
            for key, value in meta.context.entries:
                mapping[key] = value
                provider[key] = meta.id
        return mapping, provider

    def _context_clash(self, metas):
        """First pair of components disagreeing on a context key, or None."""
        sources: dict[str, tuple[str, UniformComponentMeta]] = {}
        for meta in metas:
            for key, value in meta.context.entries:
                earlier = sources.get(key)
                if earlier is not None and earlier[0] != value:
                    return key, earlier[1], meta
                if earlier is None:
                    sources[key] = (value, meta)
        return None

    # -- decisions --------------------------------------------------------------

    def _decide(self, pkg: tuple, order, naming) -> list[tuple]:
        """Pick a version+variant for pkg, or learn why none fits.
        Returns the packages whose constraints changed."""
        state = self._full_state()
        _has_positive, allowed = state.get(pkg)
        mapping, provider = self._context_mapping(order)
        cached = (self.store.cached_digests() if self.store is not None
                  else frozenset())
        universe = self.universe(pkg)
        gate_open = naming.get(pkg, False)
        candidates = sort_versions(
            [universe[c] for c in allowed
             if gate_open or not universe[c].is_prerelease],
            reverse=True)

        origin_terms: list[_Term] = []
        rejected: list[str] = []
        for version in candidates:
            variants = self.variants_of(pkg, version.canonical)
            compatible = [m for m in variants
                          if requirements_satisfied(m.requirements, mapping)]
            if not compatible:
                rejected.append(version.canonical)
                for meta in variants:
                    for key, _constraint in meta.requirements:
                        source = provider.get(key)
                        if source is not None:
                            origin_terms.append(
                                _Term((source.manager, source.name),
                                      frozenset({source.version}), True))
                continue
            chosen = es_select(compatible, mapping, cached)
            self.decision_count += 1
            if self.decision_count > self.max_decisions:
                raise ResolutionError(
                    f"resolution exceeded {self.max_decisions} decisions "
                    "without converging; giving up instead of looping")
            self.level += 1
            self._assign(_Term(pkg, frozenset({version.canonical}), True),
                         None, meta=chosen)
            touched = self._add_dependency_clauses(
                pkg, version.canonical, chosen.id.environment, chosen.deps)
            touched.extend(self._add_decision_conflicts(pkg, version.canonical,
                                                        chosen, order))
            if self.on_decide is not None:
                self.on_decide(chosen)
            return [pkg] + touched

        # Nothing fit: all allowed versions are gated out or offer no
        # variant compatible with the current context.
        gate_note = ("pre-release versions need an explicit pre-release "
                     "specifier" if not gate_open else "gate open")
        label = ("no-variant",
                 f"{pkg[0].value}/{pkg[1]} has no usable version: tried "
                 f"{', '.join(rejected) if rejected else 'no candidates'} "
                 f"({gate_note})")
        incompat = self._make_incompat(
            [_Term(pkg, frozenset(allowed), True)] + origin_terms, label)
        if incompat is None:
            raise ResolutionError(
                f"internal error: empty no-variant clause for {pkg}")
        learned = self._add_incompat(incompat)
        return list(learned.terms.keys())

    def _add_decision_conflicts(self, pkg, canonical, meta, order) -> list[tuple]:
        """Clauses for context clashes and requirement violations between
        the new component and the already decided ones."""
        touched: list[tuple] = []
        new_entries = dict(meta.context.entries)
        clash = self._context_clash(list(order) + [meta])
        if clash is not None:
            key, first, second = clash
            if second is meta:
                touched.extend(self._pairwise_conflict(
                    first, (pkg, canonical),
                    f"both set context key {key} with different values"))
            return touched
        if not new_entries:
            return touched
        mapping, _provider = self._context_mapping(list(order) + [meta])
        for earlier in order:
            if not requirements_satisfied(earlier.requirements, mapping):
                touched.extend(self._pairwise_conflict(
                    earlier, (pkg, canonical),
                    "its context entries violate the other's platform "
                    "requirements"))
        if not requirements_satisfied(meta.requirements, mapping):
            incompat = self._make_incompat(
                [_Term(pkg, frozenset({canonical}), True)],
                ("requirement",
                 f"{pkg[0].value}/{pkg[1]} {canonical} contradicts its own "
                 "platform requirements"))
            if incompat is not None:
                self._add_incompat(incompat)
                touched.append(pkg)
        return touched

    def _pairwise_conflict(self, earlier: UniformComponentMeta,
                           later: tuple, reason: str) -> list[tuple]:
        pkg, canonical = later
        earlier_pkg = (earlier.id.manager, earlier.id.name)
        incompat = self._make_incompat(
            [_Term(earlier_pkg, frozenset({earlier.id.version}), True),
             _Term(pkg, frozenset({canonical}), True)],
            ("conflict", f"{earlier.id} vs {pkg[0].value}/{pkg[1]} "
                         f"{canonical}: {reason}"))
        if incompat is None:
            return []
        self._add_incompat(incompat)
        return [earlier_pkg, pkg]

    # -- main loop -----------------------------------------------------------

    def run(self) -> ResolutionResult:
        root_clause = self._make_incompat(
            [_Term(_ROOT, frozenset({_ROOT_VERSION}), False)],
            ("root", "the application must be buildable"))
        self._add_incompat(root_clause)
        conflict = self._propagate([_ROOT])
        if conflict is not None:
            self._after_conflict(conflict)
        self._add_dependency_clauses(_ROOT, _ROOT_VERSION, "", self.root_items)
        conflict = self._propagate(
            [(item.manager, item.name) for item in self.root_items] + [_ROOT])
        if conflict is not None:
            self._after_conflict(conflict)

        while True:
            roots, order, frontier, naming = self._replay()
            clash = self._context_clash(order)
            if clash is not None:
                key, first, second = clash
                touched = self._pairwise_conflict(
                    first, ((second.id.manager, second.id.name),
                            second.id.version),
                    f"both set context key {key} with different values")
                conflict = self._propagate(touched)
                if conflict is not None:
                    self._after_conflict(conflict)
                continue
            if frontier is None:
                return self._finish(roots, order)
            changed = self._decide(frontier, order, naming)
            conflict = self._propagate(changed)
            if conflict is not None:
                self._after_conflict(conflict)

    def _finish(self, roots, order) -> ResolutionResult:
        mapping, _provider = self._context_mapping(order)
        for meta in order:
            if not requirements_satisfied(meta.requirements, mapping):
                raise ResolutionError(
                    f"internal error: {meta.id} violates its requirements "
                    "in the final context")
        context = BuildContext(tuple(sorted(mapping.items())))
        return ResolutionResult(components=order, context=context, tree=roots)


def resolve(items, sheet: SpecSheet, client, store=None,
            active_sharing: bool = False, on_decide=None,
            max_decisions: int = 4000) -> ResolutionResult:
    """Resolve declared dependency items into a concrete component list.

    With active_sharing, a first pass resolves against the local store's
    index alone (no registry traffic); if the cache cannot satisfy the
    request, resolution restarts against the registry."""
    items = list(items)
    if active_sharing and store is not None:
        try:
            return _Solver(items, sheet, StoreOnlyClient(store), store,
                           on_decide, max_decisions).run()
        except (ResolutionError, NotFoundError):
            pass
    return _Solver(items, sheet, client, store, on_decide,
                   max_decisions).run()


class StoreOnlyClient:
    """Registry-shaped view over the local store, for cache-first
    resolution and offline rebuilds from a lock file."""

    def __init__(self, store):
        self.store = store
        self.bytes_received = 0
        self.payload_bytes_received = 0

    def versions(self, manager, name):
        out = []
        for raw in self.store.list_versions(manager, name):
            try:
                out.append(Version(manager, raw))
            except Exception:
                continue
        return out

    def variants(self, manager, name, version):
        return self.store.list_variants(manager, name, version.canonical)

    def meta(self, cid):
        meta = self.store.get_meta(cid)
        if meta is None:
            raise NotFoundError(f"component {cid} not in local store")
        return meta

    def fetch_payload(self, meta, store):
        if not store.has_blob(meta.payload_digest):
            raise NotFoundError(
                f"payload {meta.payload_digest} not in local store")
        return meta.payload_digest
