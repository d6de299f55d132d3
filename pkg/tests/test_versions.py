"""Version engine: ordering vectors, specifier semantics, selection."""

from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cirforge.errors import SpecifierParseError, VersionParseError
from cirforge.model import ManagerKind
from cirforge.versions import (
    Version,
    compare,
    eligible_versions,
    matches,
    parse_specifier,
    sort_versions,
    vs_select,
)

VECTORS = Path(__file__).parent / "fixtures" / "version_vectors.tsv"
_RELATION = {"less": -1, "equal": 0, "greater": 1}
_MANAGER = {"apt": ManagerKind.APT, "pypi": ManagerKind.PYPI}


def _load_vectors():
    rows = []
    for line in VECTORS.read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        eco, left, right, relation = line.split("\t")
        rows.append((eco, left, right, relation))
    return rows


ALL_VECTORS = _load_vectors()


def test_vector_files_are_big_enough():
    apt = sum(1 for row in ALL_VECTORS if row[0] == "apt")
    pypi = sum(1 for row in ALL_VECTORS if row[0] == "pypi")
    assert apt >= 200 and pypi >= 200


@pytest.mark.parametrize("eco,left,right,relation", ALL_VECTORS,
                         ids=lambda value: str(value)[:24])
def test_ordering_matches_oracle_vectors(eco, left, right, relation):
    manager = _MANAGER[eco]
    got = compare(Version(manager, left), Version(manager, right))
    want = _RELATION[relation]
    assert (got > 0) - (got < 0) == want


def test_compare_is_antisymmetric_on_vectors():
    for eco, left, right, _relation in ALL_VECTORS[:100]:
        manager = _MANAGER[eco]
        forward = compare(Version(manager, left), Version(manager, right))
        backward = compare(Version(manager, right), Version(manager, left))
        assert (forward > 0) - (forward < 0) == -((backward > 0) - (backward < 0))


# -- canonical forms ---------------------------------------------------------

def test_pypi_canonicalization_examples():
    assert Version(ManagerKind.PYPI, "1.0.0").canonical == "1.0.0"
    assert Version(ManagerKind.PYPI, "1.0.0-RC1").canonical \
        == Version(ManagerKind.PYPI, "1.0.0rc1").canonical
    assert Version(ManagerKind.PYPI, "v2.0").canonical \
        == Version(ManagerKind.PYPI, "2.0").canonical


def test_apt_epoch_zero_is_dropped():
    assert Version(ManagerKind.APT, "0:1.2-1").canonical \
        == Version(ManagerKind.APT, "1.2-1").canonical


def test_bad_versions_raise():
    with pytest.raises(VersionParseError):
        Version(ManagerKind.PYPI, "not a version")
    with pytest.raises(VersionParseError):
        Version(ManagerKind.APT, "")


# -- specifiers --------------------------------------------------------------

def _pv(raw):
    return Version(ManagerKind.PYPI, raw)


def _match(spec_text, raw):
    return matches(parse_specifier(ManagerKind.PYPI, spec_text), _pv(raw))


def test_pypi_specifier_operators():
    assert _match(">=1.2,<2.0", "1.5")
    assert not _match(">=1.2,<2.0", "2.0")
    assert _match("==1.4.*", "1.4.9")
    assert not _match("==1.4.*", "1.5.0")
    assert _match("~=1.4.2", "1.4.9")
    assert not _match("~=1.4.2", "1.5.0")
    assert _match("!=1.3", "1.4")
    assert not _match("!=1.3", "1.3")
    assert _match("any", "0.0.1")


def test_pypi_exclusive_bounds_exclude_padding_of_the_bound():
    # pre-releases of an excluded upper bound must not slip past "<",
    # post-releases of an excluded lower bound not past ">"
    assert not _match("<2.0", "2.0rc1")
    assert not _match(">1.4", "1.4.post1")
    assert _match(">1.4.post1", "1.4.post2")
    assert _match("<2.0", "1.9.9")


def test_apt_specifier_operators():
    def apt_match(spec_text, raw):
        return matches(parse_specifier(ManagerKind.APT, spec_text),
                       Version(ManagerKind.APT, raw))

    assert apt_match(">=1.2-1", "1.2-1")
    assert apt_match(">>1.2-1", "1.3-1")
    assert not apt_match(">>1.2-1", "1.2-1")
    assert apt_match("<<2.0", "1.9")
    assert apt_match("=1.0-2", "1.0-2")
    assert not apt_match("=1.0-2", "1.0-3")
    assert apt_match("any", "9:0")


def test_oci_specifier_is_exact_tag_or_any():
    spec = parse_specifier(ManagerKind.OCI, "3.19")
    assert matches(spec, Version(ManagerKind.OCI, "3.19"))
    assert not matches(spec, Version(ManagerKind.OCI, "3.20"))
    assert matches(parse_specifier(ManagerKind.OCI, "any"),
                   Version(ManagerKind.OCI, "whatever"))
    with pytest.raises(SpecifierParseError):
        parse_specifier(ManagerKind.OCI, ">=3.19")


def test_bad_specifiers_raise():
    with pytest.raises(SpecifierParseError):
        parse_specifier(ManagerKind.PYPI, ">=")
    with pytest.raises(SpecifierParseError):
        parse_specifier(ManagerKind.APT, "~=1.0")


# -- pre-release gate --------------------------------------------------------

def test_prereleases_hidden_unless_named():
    versions = [_pv("1.0.0"), _pv("2.0.0rc1"), _pv("1.5.0")]
    spec = parse_specifier(ManagerKind.PYPI, ">=1.0")
    eligible = eligible_versions(versions, spec)
    assert [v.canonical for v in eligible] == ["1.0.0", "1.5.0"]


def test_prereleases_eligible_when_spec_names_one():
    versions = [_pv("1.0.0"), _pv("2.0.0rc1")]
    spec = parse_specifier(ManagerKind.PYPI, ">=2.0.0rc1")
    eligible = eligible_versions(versions, spec)
    assert "2.0.0rc1" in [v.canonical for v in eligible]
    chosen = vs_select(versions, spec)
    assert chosen is not None and chosen.canonical == "2.0.0rc1"


def test_no_prerelease_fallback_when_gate_empties_the_set():
    versions = [_pv("2.0.0rc1")]
    spec = parse_specifier(ManagerKind.PYPI, ">=1.0")
    assert vs_select(versions, spec) is None


def test_matches_itself_is_not_gated():
    spec = parse_specifier(ManagerKind.PYPI, ">=1.0")
    assert matches(spec, _pv("2.0.0rc1"))


def test_vs_select_picks_maximum():
    versions = [_pv("1.0.0"), _pv("1.2.0"), _pv("1.1.0")]
    spec = parse_specifier(ManagerKind.PYPI, ">=1.0,<1.2")
    chosen = vs_select(versions, spec)
    assert chosen is not None and chosen.canonical == "1.1.0"
    # identity preserved: the returned object is from the input list
    assert any(chosen is version for version in versions)


# -- properties --------------------------------------------------------------

_release = st.lists(st.integers(0, 40), min_size=1, max_size=4)


def _render_pypi(release, pre, post):
    text = ".".join(str(part) for part in release)
    if pre is not None:
        text += f"{pre[0]}{pre[1]}"
    if post is not None:
        text += f".post{post}"
    return text


pypi_versions = st.builds(
    _render_pypi, _release,
    st.one_of(st.none(), st.tuples(st.sampled_from(["a", "b", "rc"]),
                                   st.integers(0, 5))),
    st.one_of(st.none(), st.integers(0, 5)))


@settings(max_examples=200, deadline=None)
@given(pypi_versions, pypi_versions, pypi_versions)
def test_pypi_order_is_transitive(a, b, c):
    va, vb, vc = _pv(a), _pv(b), _pv(c)
    if compare(va, vb) <= 0 and compare(vb, vc) <= 0:
        assert compare(va, vc) <= 0


@settings(max_examples=200, deadline=None)
@given(pypi_versions)
def test_pypi_canonical_is_idempotent(raw):
    first = _pv(raw)
    second = _pv(first.canonical)
    assert first.canonical == second.canonical
    assert compare(first, second) == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(pypi_versions, min_size=1, max_size=8))
def test_sort_versions_is_consistent_with_compare(raws):
    ordered = sort_versions([_pv(raw) for raw in raws])
    for left, right in zip(ordered, ordered[1:]):
        assert compare(left, right) <= 0


_apt_upstream = st.from_regex(r"[0-9][A-Za-z0-9.+~]{0,8}", fullmatch=True)


@settings(max_examples=200, deadline=None)
@given(_apt_upstream, _apt_upstream)
def test_apt_compare_antisymmetry(a, b):
    va, vb = Version(ManagerKind.APT, a), Version(ManagerKind.APT, b)
    forward, backward = compare(va, vb), compare(vb, va)
    assert (forward > 0) - (forward < 0) == -((backward > 0) - (backward < 0))
