"""Platform sheets, requirement evaluation, and environment selection."""

import pytest
from packaging import tags as packaging_tags

from cirforge.environment import (
    build_eval_map,
    deb_arch_requirements,
    es_select,
    eval_constraint,
    load_sheet_file,
    normalize_cpu,
    oci_env_tag,
    oci_platform_requirements,
    probe_specsheet,
    pypi_compatible_tags,
    requirements_satisfied,
    score_variant,
    wheel_tag_requirements,
    UNUSABLE_REQUIREMENTS,
)
from cirforge.errors import ConfigurationError, MetadataError
from cirforge.model import (
    BuildContext,
    ComponentId,
    ManagerKind,
    SpecSheet,
    UniformComponentMeta,
)


def make_variant(env, *, requirements=(), digest="", size=0):
    return UniformComponentMeta(
        id=ComponentId(ManagerKind.PYPI, "pkg", "1.0", env),
        requirements=tuple(requirements),
        payload_digest=digest,
        payload_size=size,
    )


class TestSpecSheet:
    def test_round_trip_through_mapping(self, amd64_sheet):
        assert SpecSheet.from_mapping(amd64_sheet.as_dict()) == amd64_sheet

    def test_extra_keys_survive(self):
        sheet = SpecSheet.from_mapping(
            {"cpu": "amd64", "os": "linux", "gpu": "nvidia", "gpu.driver": "550"})
        assert sheet.extra == (("gpu", "nvidia"), ("gpu.driver", "550"))
        assert sheet.as_dict()["gpu"] == "nvidia"

    def test_requires_cpu_and_os(self):
        with pytest.raises(MetadataError):
            SpecSheet(cpu="", os="linux")

    def test_serialize_sorted_lines(self):
        sheet = SpecSheet(cpu="amd64", os="linux", python="3.11.6")
        assert sheet.serialize() == "cpu amd64\nos linux\npython 3.11.6\n"

    def test_to_context(self, amd64_sheet):
        assert amd64_sheet.to_context().get("cpu") == "amd64"


class TestSheetFile:
    def test_space_and_equals_forms(self, tmp_path):
        path = tmp_path / "target.sheet"
        path.write_text("# target\ncpu amd64\nos=linux\n\nlibc 2.36\n")
        assert load_sheet_file(path) == {
            "cpu": "amd64", "os": "linux", "libc": "2.36"}

    def test_bad_line_rejected(self, tmp_path):
        path = tmp_path / "bad.sheet"
        path.write_text("cpu\n")
        with pytest.raises(ConfigurationError):
            load_sheet_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_sheet_file(tmp_path / "absent.sheet")


class TestProbe:
    def test_probe_reports_this_host(self):
        sheet = probe_specsheet()
        assert sheet.os == "linux"
        assert sheet.cpu == normalize_cpu(sheet.cpu)
        assert sheet.python.count(".") == 2

    def test_overrides_win(self):
        sheet = probe_specsheet(overrides={"cpu": "aarch64", "gpu": "none"})
        assert sheet.cpu == "aarch64"
        assert dict(sheet.extra)["gpu"] == "none"

    def test_file_then_explicit_precedence(self, tmp_path):
        path = tmp_path / "s"
        path.write_text("cpu riscv64\nos linux\n")
        sheet = probe_specsheet(overrides={"cpu": "s390x"}, override_file=path)
        assert sheet.cpu == "s390x"

    def test_normalize_cpu_aliases(self):
        assert normalize_cpu("x86_64") == "amd64"
        assert normalize_cpu("ARM64") == "aarch64"
        assert normalize_cpu("weirdcpu") == "weirdcpu"


class TestConstraintEvaluation:
    @pytest.mark.parametrize(
        "constraint,actual,expected",
        [
            ("=linux", "linux", True),
            ("=linux", "macos", False),
            ("linux", "linux", True),          # bare operand means exact
            ("!=macos", "linux", True),
            ("!=linux", "linux", False),
            (">=2.17", "2.36", True),
            (">=2.17", "2.9", False),          # natural, not lexicographic
            (">=3.7", "3.10.2", True),
            ("<3", "3.0", False),
            ("==3.10.*", "3.10.2", True),
            ("==3.10.*", "3.1", False),
            ("==3.1.*", "3.10.2", False),      # prefix respects token bounds
            (">=3.7,<4", "3.11.6", True),
            (">=3.7,<4", "4.0", False),
        ],
    )
    def test_cases(self, constraint, actual, expected):
        assert eval_constraint(constraint, actual) is expected

    def test_absent_value(self):
        assert eval_constraint("!=nvidia", None) is True
        assert eval_constraint(">=1", None) is False
        assert eval_constraint("=linux", None) is False

    def test_missing_key_fails_requirement_set(self, amd64_sheet):
        eval_map = build_eval_map(amd64_sheet)
        assert not requirements_satisfied((("gpu", "=nvidia"),), eval_map)
        assert requirements_satisfied((("cpu", "=amd64"),), eval_map)
        assert requirements_satisfied((), eval_map)

    def test_empty_clause_rejected(self):
        with pytest.raises(MetadataError):
            eval_constraint(">=2.17,,<3", "2.20")

    def test_unusable_marker_never_satisfied(self, amd64_sheet):
        eval_map = build_eval_map(amd64_sheet)
        assert not requirements_satisfied(UNUSABLE_REQUIREMENTS, eval_map)

    def test_context_overlays_sheet(self, amd64_sheet):
        overlay = BuildContext((("python", "3.12.1"), ("cuda", "12.1")))
        eval_map = build_eval_map(amd64_sheet, overlay)
        assert eval_map["python"] == "3.12.1"
        assert eval_map["cuda"] == "12.1"
        assert eval_map["cpu"] == "amd64"


class TestSelection:
    def test_incompatible_variants_skipped(self, amd64_sheet):
        eval_map = build_eval_map(amd64_sheet)
        arm = make_variant("arm", requirements=(("cpu", "=aarch64"),))
        amd = make_variant("amd", requirements=(("cpu", "=amd64"),))
        assert es_select([arm, amd], eval_map) is amd
        assert es_select([arm], eval_map) is None
        assert es_select([], eval_map) is None

    def test_cache_hit_outranks_specificity(self, amd64_sheet):
        eval_map = build_eval_map(amd64_sheet)
        specific = make_variant(
            "native", requirements=(("cpu", "=amd64"), ("os", "=linux")),
            digest="aa" * 32, size=100)
        cached = make_variant("pure", digest="bb" * 32, size=5000)
        assert es_select([specific, cached], eval_map,
                         cached_digests={"bb" * 32}) is cached

    def test_specificity_outranks_size(self, amd64_sheet):
        eval_map = build_eval_map(amd64_sheet)
        native = make_variant(
            "native", requirements=(("cpu", "=amd64"),), size=9000)
        pure = make_variant("pure", size=10)
        assert es_select([pure, native], eval_map) is native

    def test_size_then_tag_tie_breaks(self, amd64_sheet):
        eval_map = build_eval_map(amd64_sheet)
        small = make_variant("zzz", size=10)
        large = make_variant("aaa", size=20)
        assert es_select([large, small], eval_map) is small
        twin_a = make_variant("aaa", size=10)
        twin_z = make_variant("zzz", size=10)
        assert es_select([twin_z, twin_a], eval_map) is twin_a

    def test_score_variant_fields(self, amd64_sheet):
        eval_map = build_eval_map(amd64_sheet)
        meta = make_variant(
            "tag", requirements=(("cpu", "=amd64"), ("libc", ">=2.17")),
            digest="cc" * 32, size=77)
        miss = score_variant(meta, eval_map, frozenset())
        assert (miss.compatible, miss.cache_hit) == (True, False)
        assert miss.specificity == 1          # only the exact clause counts
        assert miss.size_cost == 77
        hit = score_variant(meta, eval_map, {"cc" * 32})
        assert hit.cache_hit and hit.size_cost == 0
        assert hit.sort_key() < miss.sort_key()


class TestWheelTags:
    def test_abi3_manylinux(self):
        reqs = dict(wheel_tag_requirements("cp37-abi3-manylinux_2_17_x86_64"))
        assert reqs == {"python": ">=3.7", "os": "=linux",
                        "cpu": "=amd64", "libc": ">=2.17"}

    def test_version_locked_cpython(self):
        reqs = dict(wheel_tag_requirements("cp311-cp311-manylinux_2_17_aarch64"))
        assert reqs["python"] == "==3.11.*"
        assert reqs["cpu"] == "=aarch64"

    def test_pure_python(self):
        assert dict(wheel_tag_requirements("py3-none-any")) == {"python": ">=3,<4"}

    def test_legacy_manylinux_aliases(self):
        assert dict(wheel_tag_requirements("cp38-abi3-manylinux2014_x86_64"))[
            "libc"] == ">=2.17"
        assert dict(wheel_tag_requirements("cp36-abi3-manylinux1_i686"))[
            "libc"] == ">=2.5"

    def test_musllinux_uses_distinct_libc_key(self):
        reqs = dict(wheel_tag_requirements("cp311-cp311-musllinux_1_2_x86_64"))
        assert reqs["libc.musl"] == ">=1.2"
        assert "libc" not in reqs

    def test_windows_and_mac(self):
        assert dict(wheel_tag_requirements("cp311-cp311-win_amd64"))[
            "os"] == "=windows"
        mac = dict(wheel_tag_requirements("cp311-cp311-macosx_11_0_arm64"))
        assert mac["os"] == "=macos" and mac["cpu"] == "=aarch64"

    def test_compressed_tag_prefers_python3(self):
        reqs = dict(wheel_tag_requirements("py2.py3-none-any"))
        assert reqs["python"] == ">=3,<4"

    def test_unrecognizable_tag(self):
        assert wheel_tag_requirements("not-even-close-at-all") is None
        assert wheel_tag_requirements("garbage") is None

    def test_all_host_tags_satisfied_here(self):
        """Dual route: every tag the packaging library declares compatible
        with this very interpreter must satisfy the probed sheet."""
        sheet = probe_specsheet()
        eval_map = build_eval_map(sheet)
        checked = 0
        for tag in packaging_tags.sys_tags():
            text = f"{tag.interpreter}-{tag.abi}-{tag.platform}"
            reqs = wheel_tag_requirements(text)
            if reqs is None:
                continue  # tags using extensions the mapping does not cover
            if any(key not in eval_map and not c.startswith("!=")
                   for key, c in reqs):
                continue  # e.g. musl tags on a glibc-only sheet
            assert requirements_satisfied(reqs, eval_map), text
            checked += 1
        assert checked >= 20

    def test_foreign_tags_rejected_here(self):
        sheet = probe_specsheet()
        eval_map = build_eval_map(sheet)
        host_tags = {f"{t.interpreter}-{t.abi}-{t.platform}"
                     for t in packaging_tags.sys_tags()}
        for text in (
            "cp311-cp311-win_amd64",
            "cp311-cp311-macosx_11_0_arm64",
            "cp27-cp27mu-manylinux1_x86_64",
            "cp311-cp311-manylinux_2_17_s390x",
        ):
            assert text not in host_tags
            reqs = wheel_tag_requirements(text)
            assert reqs is not None
            assert not requirements_satisfied(reqs, eval_map), text

    def test_compatible_tag_listing_matches_packaging(self):
        """The generated preference list must stay inside what packaging
        computes for the same interpreter, modulo version-capped entries."""
        sheet = probe_specsheet()
        ours = pypi_compatible_tags(build_eval_map(sheet))
        host_tags = {f"{t.interpreter}-{t.abi}-{t.platform}"
                     for t in packaging_tags.sys_tags()}
        overlap = [t for t in ours if t in host_tags]
        assert len(overlap) >= len(ours) * 0.5
        assert ours[0] in host_tags


class TestDebAndOciMapping:
    def test_deb_arch_all_is_unconstrained(self):
        assert deb_arch_requirements("all") == ()

    def test_deb_arch_amd64(self):
        assert dict(deb_arch_requirements("amd64")) == {
            "os": "=linux", "cpu": "=amd64"}
        assert dict(deb_arch_requirements("arm64"))["cpu"] == "=aarch64"

    def test_oci_platform(self):
        assert dict(oci_platform_requirements("linux/amd64")) == {
            "os": "=linux", "cpu": "=amd64"}
        assert dict(oci_platform_requirements("linux/arm64/v8"))[
            "cpu"] == "=aarch64"
        with pytest.raises(MetadataError):
            oci_platform_requirements("linux")

    def test_oci_env_tag_drops_variant(self):
        assert oci_env_tag("linux/arm64/v8") == "linux/arm64"
        assert oci_env_tag("linux/amd64") == "linux/amd64"

    def test_deb_and_oci_agree_on_cpu_names(self, amd64_sheet, arm64_sheet):
        for sheet, deb_arch, oci_plat in [
            (amd64_sheet, "amd64", "linux/amd64"),
            (arm64_sheet, "arm64", "linux/arm64"),
        ]:
            eval_map = build_eval_map(sheet)
            assert requirements_satisfied(deb_arch_requirements(deb_arch), eval_map)
            assert requirements_satisfied(
                oci_platform_requirements(oci_plat), eval_map)


class TestCrossArchSelection:
    def test_one_component_two_sheets(self, amd64_sheet, arm64_sheet):
        variants = [
            make_variant("cp37-abi3-manylinux_2_17_x86_64",
                         requirements=wheel_tag_requirements(
                             "cp37-abi3-manylinux_2_17_x86_64")),
            make_variant("cp37-abi3-manylinux_2_17_aarch64",
                         requirements=wheel_tag_requirements(
                             "cp37-abi3-manylinux_2_17_aarch64")),
        ]
        picked_amd = es_select(variants, build_eval_map(amd64_sheet))
        picked_arm = es_select(variants, build_eval_map(arm64_sheet))
        assert picked_amd.id.environment.endswith("x86_64")
        assert picked_arm.id.environment.endswith("aarch64")
