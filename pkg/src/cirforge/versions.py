"""Version parsing, total ordering, and specifier matching per ecosystem.

Three grammars live here:

* PyPI follows the Python packaging version scheme: epoch, release, pre,
  post, dev, local segments, with the published normalization and ordering
  rules (trailing release zeros insignificant, dev < pre < final < post,
  local segments break ties, numeric local segments beat alphanumeric ones).
* Apt follows dpkg ordering: ``[epoch:]upstream[-revision]``, comparing
  alternating non-digit/digit chunks where ``~`` sorts before the empty
  string and letters sort before every other character.
* OciImage tags compare by natural order: maximal digit runs compare
  numerically, other runs lexicographically, digit runs after letter runs
  at the same position. A ``tag@sha256:...`` reference is digest-pinned and
  bypasses ordered selection.

Specifier grammars: PyPI supports ``==  !=  <=  >=  <  >  ~=  ===`` with
``==``/``!=`` prefix wildcards; Apt supports ``=  <<  <=  >=  >>`` and maps
the deprecated ``<``/``>`` onto ``<=``/``>=``; OciImage uses exact tag match
or a digest pin. Every ecosystem accepts the literals ``any`` (everything)
and ``latest`` (everything, resolved to the newest version by selection).
Clauses may be comma-joined; the conjunction must hold.

Pre-release policy (PyPI): a pre-release is only eligible for selection
when the specifier names a pre-release explicitly in a positive clause;
there is no fallback to pre-releases when no final version matches.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cmp_to_key

from .errors import SpecifierParseError, UsageError, VersionParseError
from .model import ManagerKind

__all__ = [
    "Version",
    "Specifier",
    "parse_version",
    "parse_specifier",
    "compare",
    "matches",
    "vs_select",
    "eligible_versions",
    "sort_versions",
]


# --------------------------------------------------------------------------
# PyPI (PEP 440 style)

_PYPI_VERSION_RE = re.compile(
    r"""
    ^\s*v?
    (?:(?P<epoch>[0-9]+)!)?
    (?P<release>[0-9]+(?:\.[0-9]+)*)
    (?P<pre>[-_.]?(?P<pre_l>alpha|a|beta|b|preview|pre|c|rc)[-_.]?(?P<pre_n>[0-9]+)?)?
    (?P<post>(?:-(?P<post_n1>[0-9]+))|(?:[-_.]?(?P<post_l>post|rev|r)[-_.]?(?P<post_n2>[0-9]+)?))?
    (?P<dev>[-_.]?dev[-_.]?(?P<dev_n>[0-9]+)?)?
    (?:\+(?P<local>[a-z0-9]+(?:[-_.][a-z0-9]+)*))?
    \s*$
    """,
    re.VERBOSE | re.IGNORECASE,
)

_PRE_ALIASES = {"alpha": "a", "a": "a", "beta": "b", "b": "b",
                "preview": "rc", "pre": "rc", "c": "rc", "rc": "rc"}


@dataclass(frozen=True)
class _PyParts:
    epoch: int
    release: tuple[int, ...]
    pre: tuple[str, int] | None
    post: int | None
    dev: int | None
    local: tuple[object, ...] | None  # mixed int/str segments


def _parse_pypi(raw: str) -> tuple[_PyParts, str, tuple, bool]:
    match = _PYPI_VERSION_RE.match(raw)
    if not match:
        raise VersionParseError(f"not a valid PyPI version: {raw!r}")
    epoch = int(match.group("epoch") or 0)
    release = tuple(int(seg) for seg in match.group("release").split("."))
    pre = None
    if match.group("pre"):
        letter = _PRE_ALIASES[match.group("pre_l").lower()]
        pre = (letter, int(match.group("pre_n") or 0))
    post = None
    if match.group("post"):
        post = int(match.group("post_n1") or match.group("post_n2") or 0)
    dev = None
    if match.group("dev"):
        dev = int(match.group("dev_n") or 0)
    local = None
    if match.group("local"):
        segs = []
        for seg in re.split(r"[-_.]", match.group("local").lower()):
            segs.append(int(seg) if seg.isdigit() else seg)
        local = tuple(segs)
    parts = _PyParts(epoch, release, pre, post, dev, local)
    return parts, _pypi_canonical(parts), _pypi_key(parts), _pypi_is_pre(parts)


def _pypi_canonical(p: _PyParts) -> str:
    out = []
    if p.epoch:
        out.append(f"{p.epoch}!")
    out.append(".".join(str(seg) for seg in p.release))
    if p.pre is not None:
        out.append(f"{p.pre[0]}{p.pre[1]}")
    if p.post is not None:
        out.append(f".post{p.post}")
    if p.dev is not None:
        out.append(f".dev{p.dev}")
    if p.local is not None:
        out.append("+" + ".".join(str(seg) for seg in p.local))
    return "".join(out)


def _trim_release(release: tuple[int, ...]) -> tuple[int, ...]:
    end = len(release)
    while end > 1 and release[end - 1] == 0:
        end -= 1
    return release[:end] if end != len(release) else release


def _pypi_key(p: _PyParts) -> tuple:
    # Sentinel encodings keep every slot a same-shape comparable tuple.
    if p.pre is None and p.post is None and p.dev is not None:
        pre_key = (0, "", 0)            # bare .devN sorts below any pre
    elif p.pre is None:
        pre_key = (2, "", 0)            # no pre sorts above all pres
    else:
        pre_key = (1, p.pre[0], p.pre[1])
    post_key = (0, 0) if p.post is None else (1, p.post)
    dev_key = (1, 0) if p.dev is None else (0, p.dev)
    if p.local is None:
        local_key = ((0, 0, ""),)
    else:
        local_key = tuple(
            (1, seg, "") if isinstance(seg, int) else (0, 0, seg)
            for seg in p.local
        )
    return (p.epoch, _trim_release(p.release), pre_key, post_key, dev_key, local_key)


def _pypi_is_pre(p: _PyParts) -> bool:
    return p.pre is not None or p.dev is not None


def _pypi_public_key(key: tuple) -> tuple:
    return key[:5]


def _pypi_base_key(key: tuple) -> tuple:
    """Epoch + trimmed release only (the 'base version')."""
    return key[:2]


# --------------------------------------------------------------------------
# Apt (dpkg ordering)

_APT_VERSION_RE = re.compile(
    r"^(?:(?P<epoch>[0-9]+):)?(?P<upstream>[A-Za-z0-9][A-Za-z0-9.+~:-]*?)"
    r"(?:-(?P<revision>[A-Za-z0-9+.~]+))?$"
)


def _parse_apt(raw: str) -> tuple[tuple[int, str, str], str, tuple]:
    text = raw.strip()
    match = _APT_VERSION_RE.match(text)
    if not match:
        raise VersionParseError(f"not a valid Debian version: {raw!r}")
    epoch = int(match.group("epoch") or 0)
    upstream = match.group("upstream")
    revision = match.group("revision") or ""
    if ":" in upstream and match.group("epoch") is None:
        raise VersionParseError(f"colon without epoch in {raw!r}")
    parts = (epoch, upstream, revision)
    canonical = _apt_canonical(parts)
    eq_key = ("apt", epoch, _apt_eq_tokens(upstream), _apt_eq_tokens(revision))
    return parts, canonical, eq_key


def _apt_chunks(part: str) -> list[object]:
    """Alternating non-digit/digit chunks, starting with a non-digit chunk."""
    chunks: list[object] = []
    i = 0
    n = len(part)
    while i < n or not chunks:
        start = i
        while i < n and not part[i].isdigit():
            i += 1
        chunks.append(part[start:i])
        if i >= n:
            break
        start = i
        while i < n and part[i].isdigit():
            i += 1
        chunks.append(int(part[start:i]))
    return chunks


def _apt_eq_tokens(part: str) -> tuple:
    """Equality key: chunks with cmp-neutral tail (empty strings, zero
    numerics) stripped so '1.0-0' and '1.0' hash alike."""
    chunks = _apt_chunks(part)
    while chunks and (chunks[-1] == "" or chunks[-1] == 0):
        chunks.pop()
    return tuple(chunks)


def _apt_canonical(parts: tuple[int, str, str]) -> str:
    epoch, upstream, revision = parts

    def normalize(part: str) -> str:
        out = []
        for chunk in _apt_chunks(part):
            out.append(str(chunk) if isinstance(chunk, int) else chunk)
        return "".join(out)

    text = normalize(upstream)
    if epoch:
        text = f"{epoch}:{text}"
    if revision and _apt_eq_tokens(revision):
        text = f"{text}-{normalize(revision)}"
    return text


def _apt_char_order(ch: str) -> int:
    if ch == "~":
        return -1
    if ch.isalpha():
        return ord(ch)
    return ord(ch) + 256


def _apt_cmp_part(a: str, b: str) -> int:
    ca, cb = _apt_chunks(a), _apt_chunks(b)
    for i in range(max(len(ca), len(cb))):
        xa = ca[i] if i < len(ca) else ("" if i % 2 == 0 else 0)
        xb = cb[i] if i < len(cb) else ("" if i % 2 == 0 else 0)
        if i % 2 == 0:  # non-digit chunk, compare char by char
            sa, sb = str(xa), str(xb)
            for j in range(max(len(sa), len(sb))):
                oa = _apt_char_order(sa[j]) if j < len(sa) else 0
                ob = _apt_char_order(sb[j]) if j < len(sb) else 0
                if oa != ob:
                    return -1 if oa < ob else 1
        else:
            if xa != xb:
                return -1 if xa < xb else 1
    return 0


def _apt_cmp(a: tuple[int, str, str], b: tuple[int, str, str]) -> int:
    if a[0] != b[0]:
        return -1 if a[0] < b[0] else 1
    upstream = _apt_cmp_part(a[1], b[1])
    if upstream:
        return upstream
    return _apt_cmp_part(a[2], b[2])


# --------------------------------------------------------------------------
# OCI tags

_OCI_TAG_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9._-]{0,127}$")
_OCI_DIGEST_RE = re.compile(r"^sha256:[0-9a-f]{64}$")


def _split_oci_ref(raw: str) -> tuple[str, str]:
    """Split 'tag@sha256:...' into (tag, digest); either part may be empty."""
    text = raw.strip()
    if "@" in text:
        tag, _, digest = text.partition("@")
        if not _OCI_DIGEST_RE.match(digest):
            raise VersionParseError(f"bad image digest in {raw!r}")
        return tag, digest
    return text, ""


def _oci_natural_key(tag: str) -> tuple:
    key = []
    for run in re.findall(r"\d+|\D+", tag):
        if run.isdigit():
            key.append((1, int(run), ""))
        else:
            key.append((0, 0, run))
    return tuple(key)


def _parse_oci(raw: str) -> tuple[str, str, str, tuple]:
    tag, digest = _split_oci_ref(raw)
    if not tag and not digest:
        raise VersionParseError("empty image reference")
    if tag and not _OCI_TAG_RE.match(tag):
        raise VersionParseError(f"not a valid image tag: {raw!r}")
    canonical = tag + (f"@{digest}" if digest else "")
    return tag, digest, canonical, (_oci_natural_key(tag), digest)


# --------------------------------------------------------------------------
# Version value

class Version:
    """Parsed version of one ecosystem; totally ordered within it."""

    __slots__ = ("manager", "raw", "canonical", "is_prerelease",
                 "pinned_digest", "_eq_key", "_ord_key", "_apt_parts",
                 "_py_parts")

    def __init__(self, manager: ManagerKind, raw: str):
        raw = raw.strip()
        if not raw:
            raise VersionParseError("empty version string")
        self.manager = manager
        self.raw = raw
        self.pinned_digest = ""
        self._apt_parts = None
        self._py_parts = None
        self.is_prerelease = False
        if manager is ManagerKind.PYPI:
            parts, canonical, key, is_pre = _parse_pypi(raw)
            self._py_parts = parts
            self.canonical = canonical
            self._eq_key = ("pypi", key)
            self._ord_key = key
            self.is_prerelease = is_pre
        elif manager is ManagerKind.APT:
            parts, canonical, eq_key = _parse_apt(raw)
            self._apt_parts = parts
            self.canonical = canonical
            self._eq_key = eq_key
            self._ord_key = None
        elif manager is ManagerKind.OCI:
            tag, digest, canonical, key = _parse_oci(raw)
            self.pinned_digest = digest
            self.canonical = canonical
            self._eq_key = ("oci", key)
            self._ord_key = key
        else:
            self.canonical = raw
            self._eq_key = ("local", raw)
            self._ord_key = (raw,)

    @property
    def tag(self) -> str:
        """OCI tag part (raw string without any digest pin)."""
        return _split_oci_ref(self.raw)[0] if self.manager is ManagerKind.OCI else self.raw

    def __repr__(self) -> str:
        return f"Version({self.manager.value}, {self.canonical!r})"

    def __str__(self) -> str:
        return self.canonical

    def __eq__(self, other) -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.manager is other.manager and self._eq_key == other._eq_key

    def __hash__(self) -> int:
        return hash((self.manager, self._eq_key))

    def __lt__(self, other) -> bool:
        return compare(self, other) < 0

    def __le__(self, other) -> bool:
        return compare(self, other) <= 0

    def __gt__(self, other) -> bool:
        return compare(self, other) > 0

    def __ge__(self, other) -> bool:
        return compare(self, other) >= 0


def parse_version(manager: ManagerKind, raw: str) -> Version:
    return Version(manager, raw)


def compare(a: Version, b: Version) -> int:
    """Total order within one ecosystem: -1, 0, or 1."""
    if a.manager is not b.manager:
        raise UsageError(
            f"cannot compare versions across ecosystems "
            f"({a.manager.value} vs {b.manager.value})"
        )
    if a.manager is ManagerKind.APT:
        return _apt_cmp(a._apt_parts, b._apt_parts)
    if a._ord_key < b._ord_key:
        return -1
    if a._ord_key > b._ord_key:
        return 1
    return 0


def sort_versions(versions, reverse: bool = False) -> list[Version]:
    return sorted(versions, key=cmp_to_key(compare), reverse=reverse)


# --------------------------------------------------------------------------
# Specifiers

_PYPI_OPS = ("===", "==", "!=", "<=", ">=", "~=", "<", ">")
_APT_OPS = ("<<", "<=", ">=", ">>", "=", "<", ">")


@dataclass(frozen=True)
class _Clause:
    op: str
    operand: str
    version: Version | None = None          # parsed operand where applicable
    wildcard: tuple[int, tuple[int, ...]] | None = None  # (epoch, release prefix)


@dataclass(frozen=True)
class Specifier:
    """Parsed version specifier of one ecosystem.

    keyword is 'any' or 'latest' for the bare literals, in which case
    clauses is empty; both accept every version and differ only in intent
    (selection picks the newest either way).
    """

    manager: ManagerKind
    raw: str
    keyword: str | None = None
    clauses: tuple[_Clause, ...] = ()
    pinned_digest: str = ""
    pinned_tag: str = ""

    @property
    def names_prerelease(self) -> bool:
        """True when a positive clause operand is itself a pre-release."""
        if self.manager is not ManagerKind.PYPI:
            return False
        for clause in self.clauses:
            if clause.op == "!=":
                continue
            if clause.version is not None and clause.version.is_prerelease:
                return True
        return False

    def __str__(self) -> str:
        return self.raw


def parse_specifier(manager: ManagerKind, raw: str) -> Specifier:
    text = raw.strip()
    if not text or text.lower() in ("any", "latest"):
        keyword = (text.lower() or "any")
        return Specifier(manager, text or "any", keyword=keyword)
    if manager is ManagerKind.PYPI:
        return _parse_pypi_specifier(text)
    if manager is ManagerKind.APT:
        return _parse_apt_specifier(text)
    if manager is ManagerKind.OCI:
        return _parse_oci_specifier(text)
    return Specifier(manager, text, clauses=(_Clause("=", text),))


def _parse_pypi_specifier(text: str) -> Specifier:
    clauses = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            raise SpecifierParseError(f"empty clause in specifier {text!r}")
        for op in _PYPI_OPS:
            if piece.startswith(op):
                operand = piece[len(op):].strip()
                break
        else:
            raise SpecifierParseError(f"no operator in clause {piece!r}")
        if op in ("<", ">") and operand.startswith("="):
            raise SpecifierParseError(f"bad operator in clause {piece!r}")
        if not operand:
            raise SpecifierParseError(f"empty operand in clause {piece!r}")
        if operand.endswith(".*"):
            if op not in ("==", "!="):
                raise SpecifierParseError(
                    f"prefix wildcard only valid with == or != (got {piece!r})")
            prefix = operand[:-2]
            match = re.fullmatch(r"(?:v)?(?:([0-9]+)!)?([0-9]+(?:\.[0-9]+)*)",
                                 prefix, re.IGNORECASE)
            if not match:
                raise SpecifierParseError(f"bad wildcard operand {operand!r}")
            epoch = int(match.group(1) or 0)
            release = tuple(int(seg) for seg in match.group(2).split("."))
            clauses.append(_Clause(op, operand, wildcard=(epoch, release)))
            continue
        if op == "===":
            clauses.append(_Clause(op, operand))
            continue
        version = Version(ManagerKind.PYPI, operand)
        if op == "~=":
            if len(version._py_parts.release) < 2:
                raise SpecifierParseError(
                    f"~= needs at least two release segments (got {piece!r})")
            if version._py_parts.local is not None:
                raise SpecifierParseError(f"~= operand cannot carry +local ({piece!r})")
        if op in ("<=", ">=", "<", ">") and version._py_parts.local is not None:
            raise SpecifierParseError(
                f"{op} operand cannot carry +local ({piece!r})")
        clauses.append(_Clause(op, operand, version=version))
    return Specifier(ManagerKind.PYPI, text, clauses=tuple(clauses))


def _parse_apt_specifier(text: str) -> Specifier:
    clauses = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            raise SpecifierParseError(f"empty clause in specifier {text!r}")
        for op in _APT_OPS:
            if piece.startswith(op):
                operand = piece[len(op):].strip()
                break
        else:
            raise SpecifierParseError(f"no operator in clause {piece!r}")
        if not operand:
            raise SpecifierParseError(f"empty operand in clause {piece!r}")
        # dpkg deprecated bare < and > as aliases of <= and >=.
        op = {"<": "<=", ">": ">="}.get(op, op)
        clauses.append(_Clause(op, operand, version=Version(ManagerKind.APT, operand)))
    return Specifier(ManagerKind.APT, text, clauses=tuple(clauses))


def _parse_oci_specifier(text: str) -> Specifier:
    tag, digest = _split_oci_ref(text)
    if digest:
        if tag and not _OCI_TAG_RE.match(tag):
            raise SpecifierParseError(f"bad tag in pinned reference {text!r}")
        return Specifier(ManagerKind.OCI, text, pinned_digest=digest, pinned_tag=tag)
    if not _OCI_TAG_RE.match(tag):
        raise SpecifierParseError(f"not a valid image tag specifier: {text!r}")
    return Specifier(ManagerKind.OCI, text,
                     clauses=(_Clause("=", tag, version=Version(ManagerKind.OCI, tag)),))


# --------------------------------------------------------------------------
# Matching

def matches(spec: Specifier, version: Version) -> bool:
    """Clause conjunction; pre-release eligibility is handled separately by
    eligible_versions/vs_select, never here."""
    if spec.manager is not version.manager:
        raise UsageError("specifier and version ecosystems differ")
    if spec.keyword is not None:
        return True
    if spec.manager is ManagerKind.OCI and spec.pinned_digest:
        if version.pinned_digest:
            return version.pinned_digest == spec.pinned_digest
        return bool(spec.pinned_tag) and version.tag == spec.pinned_tag
    return all(_clause_matches(spec.manager, clause, version)
               for clause in spec.clauses)


def _clause_matches(manager: ManagerKind, clause: _Clause, version: Version) -> bool:
    if manager is ManagerKind.PYPI:
        return _pypi_clause(clause, version)
    if manager is ManagerKind.APT:
        result = _apt_cmp(version._apt_parts, clause.version._apt_parts)
        return {
            "=": result == 0,
            "<<": result < 0,
            "<=": result <= 0,
            ">=": result >= 0,
            ">>": result > 0,
        }[clause.op]
    # OCI exact tag, Local exact string.
    if manager is ManagerKind.OCI:
        return version.tag == clause.operand
    return version.raw == clause.operand


def _pypi_clause(clause: _Clause, version: Version) -> bool:
    parts = version._py_parts
    key = version._ord_key
    if clause.wildcard is not None:
        epoch, prefix = clause.wildcard
        padded = parts.release + (0,) * max(0, len(prefix) - len(parts.release))
        hit = parts.epoch == epoch and padded[:len(prefix)] == prefix
        return hit if clause.op == "==" else not hit
    if clause.op == "===":
        return version.canonical.lower() == clause.operand.lower()

    spec_version = clause.version
    spec_parts = spec_version._py_parts
    spec_key = spec_version._ord_key

    if clause.op in ("==", "!="):
        if spec_parts.local is not None:
            hit = key == spec_key
        else:
            hit = _pypi_public_key(key) == _pypi_public_key(spec_key)
        return hit if clause.op == "==" else not hit
    if clause.op == "<=":
        return _pypi_public_key(key) <= _pypi_public_key(spec_key)
    if clause.op == ">=":
        return _pypi_public_key(key) >= _pypi_public_key(spec_key)
    if clause.op == "<":
        if not key < spec_key:
            return False
        # A pre-release of the bound itself does not satisfy an exclusive bound.
        if version.is_prerelease and not spec_version.is_prerelease:
            if _pypi_base_key(key) == _pypi_base_key(spec_key):
                return False
        return True
    if clause.op == ">":
        if not key > spec_key:
            return False
        if _pypi_base_key(key) == _pypi_base_key(spec_key):
            # Neither a post-release nor a local tie-break of the bound
            # satisfies an exclusive lower bound on that version.
            if parts.post is not None and spec_parts.post is None:
                return False
            if parts.local is not None:
                return False
        return True
    if clause.op == "~=":
        floor = _Clause(">=", clause.operand, version=spec_version)
        prefix = spec_parts.release[:-1]
        ceiling = _Clause("==", "", wildcard=(spec_parts.epoch, prefix))
        return _pypi_clause(floor, version) and _pypi_clause(ceiling, version)
    raise AssertionError(f"unhandled operator {clause.op}")


def eligible_versions(versions, spec: Specifier) -> list[Version]:
    """Apply the pre-release gate: PyPI pre-releases drop out unless the
    specifier names one explicitly."""
    versions = list(versions)
    if spec.manager is ManagerKind.PYPI and not spec.names_prerelease:
        return [v for v in versions if not v.is_prerelease]
    return versions


def vs_select(versions, spec: Specifier) -> Version | None:
    """Pick the newest eligible version satisfying the specifier, or None.

    The result is always an element of the given iterable (identity is
    preserved, not reconstructed)."""
    candidates = [v for v in eligible_versions(versions, spec) if matches(spec, v)]
    if not candidates:
        return None
    best = candidates[0]
    for candidate in candidates[1:]:
        if compare(candidate, best) > 0:
            best = candidate
    return best
