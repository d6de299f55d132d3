"""Converters: wheels, debs, image layouts, sdists, cross-manager rules.

Fidelity checks re-derive the expected result straight from the upstream
artifact with independent parsing (zipfile/email/packaging for wheels,
tarfile replay for debs and layers) and demand byte-level agreement.
"""

import gzip
import hashlib
import io
import json
import tarfile
from email.parser import BytesHeaderParser
from pathlib import Path

import pytest
from packaging.requirements import Requirement

from factory import (
    AMD64_SHEET,
    OPENCV_XDEPS,
    make_deb,
    make_oci_layout,
    make_wheel,
)
from cirforge.convert import (
    XDeps,
    convert_deb,
    convert_oci,
    convert_sdist,
    convert_wheel,
)
from cirforge.convert.wheel import SITE_PACKAGES, parse_wheel_filename
from cirforge.environment import wheel_tag_requirements
from cirforge.errors import ConversionError, MetadataError
from cirforge.model import (
    ManagerKind,
    SpecSheet,
    parse_meta,
    serialize_meta,
)


def payload_index(payload_path: Path) -> dict[str, tuple]:
    """Read a payload archive into {name: (kind, mode, data-or-target)}."""
    index: dict[str, tuple] = {}
    with tarfile.open(payload_path, "r:gz") as tar:
        for member in tar:
            if member.issym():
                index[member.name] = ("symlink", member.mode, member.linkname)
            elif member.isdir():
                index[member.name] = ("dir", member.mode, None)
            else:
                data = tar.extractfile(member).read()
                index[member.name] = ("file", member.mode, data)
    return index


def embedded_meta(index: dict[str, tuple]):
    kind, _mode, data = index["uniform.meta"]
    assert kind == "file"
    return parse_meta(data.decode("utf-8"))


def check_embedded_copy(component):
    """The archive's own metadata copy must equal the index copy minus the
    payload digest/size (which describe the archive itself)."""
    index = payload_index(component.payload_path)
    inner = embedded_meta(index)
    outer = component.meta
    assert serialize_meta(inner, include_payload=False) == serialize_meta(
        outer, include_payload=False)
    assert inner.payload_digest == "" and inner.payload_size == 0
    assert outer.payload_digest == hashlib.sha256(
        component.payload_path.read_bytes()).hexdigest()
    assert outer.payload_size == component.payload_path.stat().st_size
    return index


@pytest.fixture
def sheet():
    return SpecSheet.from_mapping(AMD64_SHEET)


class TestWheelConversion:
    def test_identity_and_requirements(self, tmp_path, sheet):
        wheel = make_wheel(tmp_path, "Demo_Pkg", "1.2.3",
                           tag="cp37-abi3-manylinux_2_17_x86_64",
                           requires_python=">=3.8")
        component = convert_wheel(wheel, sheet, tmp_path / "out")
        cid = component.meta.id
        assert str(cid) == ("PyPI/demo-pkg/1.2.3/cp37-abi3-manylinux_2_17_x86_64")
        expected = set(wheel_tag_requirements("cp37-abi3-manylinux_2_17_x86_64"))
        # Tag floor and the metadata's own Requires-Python ride side by side.
        expected.add(("python", ">=3.8"))
        assert set(component.meta.requirements) == expected

    def test_dependency_list_matches_independent_reparse(self, tmp_path, sheet):
        requires = (
            "numpy>=1.26.0",
            "pillow",
            'pywin32>=300; sys_platform == "win32"',
            'tomli>=1.1; python_version < "3.11"',
            'rich; platform_machine == "x86_64"',
        )
        wheel = make_wheel(tmp_path, "marked", "2.0",
                           tag="cp311-cp311-manylinux_2_17_x86_64",
                           requires=requires)
        component = convert_wheel(wheel, sheet, tmp_path / "out")

        # Independent route: read METADATA straight from the zip and
        # evaluate markers with the packaging library against the same
        # target facts.
        import zipfile

        with zipfile.ZipFile(wheel) as zf:
            meta_text = next(zf.read(n) for n in zf.namelist()
                             if n.endswith(".dist-info/METADATA"))
        parsed = BytesHeaderParser().parsebytes(meta_text)
        env = {"sys_platform": "linux", "python_version": "3.11",
               "python_full_version": "3.11.6", "platform_machine": "x86_64",
               "os_name": "posix", "platform_system": "Linux",
               "implementation_name": "cpython",
               "platform_python_implementation": "CPython",
               "implementation_version": "3.11.6", "extra": ""}
        expected = []
        for raw in parsed.get_all("Requires-Dist"):
            requirement = Requirement(raw)
            if requirement.marker is None or requirement.marker.evaluate(env):
                expected.append((requirement.name.lower(),
                                 str(requirement.specifier) or "any"))
        got = [(d.name, d.specifier) for d in component.meta.deps]
        assert sorted(got) == sorted(expected)
        assert got and ("pywin32", ">=300") not in got
        # Both false-marker deps are recorded: win32 by platform, tomli
        # because the sheet's python is already 3.11.
        assert any("pywin32" in raw for raw in component.report.dropped_deps)
        assert any("tomli" in raw for raw in component.report.dropped_deps)

    def test_payload_matches_zip_contents(self, tmp_path, sheet):
        wheel = make_wheel(tmp_path, "treepkg", "1.0.0",
                           modules=("treepkg",),
                           extra_files={"treepkg/data.txt": "payload data"})
        component = convert_wheel(wheel, sheet, tmp_path / "out")
        index = check_embedded_copy(component)

        import zipfile

        with zipfile.ZipFile(wheel) as zf:
            for name in zf.namelist():
                arc = f"rootfs/{SITE_PACKAGES}/{name}"
                kind, _mode, data = index[arc]
                assert kind == "file"
                assert data == zf.read(name), name
        assert f"rootfs/{SITE_PACKAGES}/treepkg" in index
        assert index[f"rootfs/{SITE_PACKAGES}/treepkg"][0] == "dir"

    def test_console_script_materialized(self, tmp_path, sheet):
        wheel = make_wheel(tmp_path, "cli-pkg", "1.0", modules=("cli_pkg",),
                           console_scripts={"clip": "cli_pkg:run"})
        component = convert_wheel(wheel, sheet, tmp_path / "out")
        index = payload_index(component.payload_path)
        kind, mode, data = index["rootfs/usr/bin/clip"]
        assert kind == "file" and mode == 0o755
        assert b"from cli_pkg import run" in data
        assert data.startswith(b"#!/usr/bin/env python3")
        assert any("clip" in action for action in component.report.actions)

    def test_data_scripts_section(self, tmp_path, sheet):
        wheel = make_wheel(
            tmp_path, "scripted", "1.0",
            extra_files={"scripted-1.0.data/scripts/launch": "#!python\nrun()\n"})
        component = convert_wheel(wheel, sheet, tmp_path / "out")
        index = payload_index(component.payload_path)
        kind, mode, data = index["rootfs/usr/bin/launch"]
        assert (kind, mode) == ("file", 0o755)
        assert data == b"#!/usr/bin/env python3\nrun()\n"

    def test_provides_from_top_level(self, tmp_path, sheet):
        wheel = make_wheel(tmp_path, "opencv-python", "4.10.0.84",
                           modules=("cv2",))
        component = convert_wheel(wheel, sheet, tmp_path / "out")
        assert component.meta.provides == (("module", "cv2"),)

    def test_deterministic_output(self, tmp_path, sheet):
        wheel = make_wheel(tmp_path, "stable", "1.0", modules=("stable",))
        first = convert_wheel(wheel, sheet, tmp_path / "out1")
        second = convert_wheel(wheel, sheet, tmp_path / "out2")
        assert first.meta.payload_digest == second.meta.payload_digest
        assert first.payload_path.read_bytes() == second.payload_path.read_bytes()

    def test_xdeps_injection(self, tmp_path, sheet):
        wheel = make_wheel(tmp_path, "opencv-python", "4.10.0.84",
                           tag="cp37-abi3-manylinux_2_17_x86_64",
                           requires=("numpy>=1.26.0",), modules=("cv2",))
        rules = XDeps.parse(OPENCV_XDEPS)
        component = convert_wheel(wheel, sheet, tmp_path / "out", xdeps=rules)
        deps = {(d.manager, d.name): d.specifier for d in component.meta.deps}
        assert deps[(ManagerKind.APT, "libgl1-mesa-glx")] == "any"
        assert deps[(ManagerKind.APT, "libglib2.0-0")] == "any"
        assert deps[(ManagerKind.PYPI, "numpy")] == ">=1.26.0"
        assert component.meta.context.get("opencv.version") == "4.10.0.84"

    def test_filename_parser(self):
        assert parse_wheel_filename("a-1.0-py3-none-any.whl") == (
            "a", "1.0", "py3-none-any")
        assert parse_wheel_filename("a-1.0-4-py3-none-any.whl") == (
            "a", "1.0", "py3-none-any")
        with pytest.raises(ConversionError):
            parse_wheel_filename("not-a-wheel.zip")

    def test_rejects_wheel_without_metadata(self, tmp_path, sheet):
        import zipfile

        bogus = tmp_path / "bogus-1.0-py3-none-any.whl"
        with zipfile.ZipFile(bogus, "w") as zf:
            zf.writestr("bogus/__init__.py", "")
        with pytest.raises(ConversionError):
            convert_wheel(bogus, sheet, tmp_path / "out")


def reference_deb_tree(deb_path: Path) -> dict[str, tuple]:
    """Manually unpack data.tar: the reference for payload comparison."""
    from cirforge.archive import ar_members

    data_blob = next(data for name, data in ar_members(deb_path)
                     if name.startswith("data.tar"))
    reference: dict[str, tuple] = {}
    with tarfile.open(fileobj=io.BytesIO(data_blob), mode="r:*") as tar:
        for member in tar:
            name = member.name.lstrip("./").strip("/")
            if not name:
                continue
            if member.issym():
                reference[name] = ("symlink", member.linkname)
            elif member.isdir():
                reference[name] = ("dir", member.mode & 0o7777 or 0o755)
            elif member.isfile():
                reference[name] = ("file", member.mode & 0o7777,
                                   tar.extractfile(member).read())
    return reference


class TestDebConversion:
    def test_identity_and_arch_requirements(self, tmp_path):
        deb = make_deb(tmp_path, "libfoo1", "1.2.3-1", arch="amd64")
        component = convert_deb(deb, tmp_path / "out")
        assert str(component.meta.id) == "Apt/libfoo1/1.2.3-1/amd64"
        assert dict(component.meta.requirements) == {
            "os": "=linux", "cpu": "=amd64"}

    def test_arch_all_unconstrained(self, tmp_path):
        deb = make_deb(tmp_path, "tzdata-like", "2024a-1", arch="all")
        component = convert_deb(deb, tmp_path / "out")
        assert component.meta.requirements == ()
        assert component.meta.id.environment == "all"

    def test_payload_matches_reference_extraction(self, tmp_path):
        deb = make_deb(
            tmp_path, "libfoo1", "1.2.3-1",
            files={
                "usr/lib/x86_64-linux-gnu/libfoo.so.1.2.3": b"\x7fELF foo",
                "usr/lib/x86_64-linux-gnu/libfoo.so.1":
                    ("symlink", "libfoo.so.1.2.3"),
                "usr/bin/footool": "#!/bin/sh\nexec true\n",
                "usr/share/doc/libfoo1/README": "docs",
            })
        component = convert_deb(deb, tmp_path / "out")
        index = check_embedded_copy(component)

        reference = reference_deb_tree(deb)
        payload_rootfs = {
            name[len("rootfs/"):]: value for name, value in index.items()
            if name.startswith("rootfs/")}
        for name, expected in reference.items():
            got = payload_rootfs.pop(name)
            if expected[0] == "symlink":
                assert (got[0], got[2]) == expected, name
            elif expected[0] == "dir":
                assert (got[0], got[1]) == expected, name
            else:
                assert (got[0], got[1], got[2]) == expected, name
        assert payload_rootfs == {}  # nothing the data member did not carry

    def test_depends_parsing(self, tmp_path):
        deb = make_deb(
            tmp_path, "complex", "1.0-1",
            depends=("libglib2.0-0 (>= 2.12.0), debconf | debconf-2.0, "
                     "libgl1 [amd64], ${misc:Depends}"),
            predepends="dpkg (>= 1.15)")
        component = convert_deb(deb, tmp_path / "out")
        deps = [(d.name, d.specifier) for d in component.meta.deps]
        assert deps == [
            ("libglib2.0-0", ">=2.12.0"),
            ("debconf", "any"),
            ("libgl1", "any"),
            ("dpkg", ">=1.15"),
        ]
        assert any("substvar" in warning for warning in component.report.warnings)

    def test_provides_field(self, tmp_path):
        deb = make_deb(tmp_path, "mawk", "1.3-1", provides="awk")
        component = convert_deb(deb, tmp_path / "out")
        assert component.meta.provides == (("apt", "awk"),)

    def test_postinst_user_and_ldconfig_fragments(self, tmp_path):
        deb = make_deb(
            tmp_path, "svcpkg", "2.0-1",
            files={
                "usr/lib/x86_64-linux-gnu/libsvc.so.2.0": b"\x7fELF",
                "usr/lib/x86_64-linux-gnu/libsvc.so.2":
                    ("symlink", "libsvc.so.2.0"),
                "usr/share/svc/notalib.txt": "x",
            },
            postinst=("addgroup --system svcgroup\n"
                      "adduser --system --no-create-home svcuser\n"
                      "ldconfig\n"))
        component = convert_deb(deb, tmp_path / "out")
        index = payload_index(component.payload_path)
        assert index["fragments/passwd"][2] == (
            b"svcuser:x:::svcuser (system):/nonexistent:/usr/sbin/nologin\n")
        assert index["fragments/group"][2] == b"svcgroup:x::\nsvcuser:x::\n"
        ldconfig = index["fragments/ldconfig"][2].decode().splitlines()
        assert ldconfig == [
            "/usr/lib/x86_64-linux-gnu/libsvc.so.2",
            "/usr/lib/x86_64-linux-gnu/libsvc.so.2.0",
        ]

    def test_postinst_symlink_and_chmod(self, tmp_path):
        deb = make_deb(
            tmp_path, "altpkg", "1.0-1",
            files={"usr/bin/tool-real": "#!/bin/sh\n",
                   "etc/altpkg.conf": "x"},
            postinst=("ln -s /usr/bin/tool-real /usr/bin/tool\n"
                      "chmod 0600 /etc/altpkg.conf\n"
                      "update-rc.d altpkg defaults\n"))
        component = convert_deb(deb, tmp_path / "out")
        index = payload_index(component.payload_path)
        assert index["rootfs/usr/bin/tool"] == (
            "symlink", 0o777, "/usr/bin/tool-real")
        assert index["rootfs/etc/altpkg.conf"][1] == 0o600
        assert any("update-rc.d" in w for w in component.report.warnings)

    def test_deterministic_output(self, tmp_path):
        deb = make_deb(tmp_path, "stable", "1.0-1")
        first = convert_deb(deb, tmp_path / "out1")
        second = convert_deb(deb, tmp_path / "out2")
        assert first.payload_path.read_bytes() == second.payload_path.read_bytes()

    def test_rejects_non_deb(self, tmp_path):
        bogus = tmp_path / "bogus.deb"
        bogus.write_bytes(b"definitely not an ar archive")
        with pytest.raises(ConversionError):
            convert_deb(bogus, tmp_path / "out")


def _tgz(files: dict[str, object]) -> bytes:
    """files: name -> bytes | ("symlink", target) | ("dir",)"""
    buf = io.BytesIO()
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
        with tarfile.open(fileobj=gz, mode="w") as tar:
            for name, content in files.items():
                info = tarfile.TarInfo(name)
                if isinstance(content, tuple) and content[0] == "symlink":
                    info.type = tarfile.SYMTYPE
                    info.linkname = content[1]
                    tar.addfile(info)
                elif isinstance(content, tuple) and content[0] == "dir":
                    info.type = tarfile.DIRTYPE
                    tar.addfile(info)
                else:
                    data = content if isinstance(content, bytes) else str(
                        content).encode()
                    info.size = len(data)
                    tar.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def custom_layout(out_dir: Path, layers: list[bytes], *, ref="demo:1.0",
                  platform=("linux", "amd64"), config_extra=None,
                  nested_index=False, extra_manifests=()):
    """Hand-rolled image layout for layer-semantics tests."""
    layout = out_dir / "layout"
    blobs = layout / "blobs" / "sha256"
    blobs.mkdir(parents=True)
    (layout / "oci-layout").write_text('{"imageLayoutVersion": "1.0.0"}')

    def put(data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        (blobs / digest).write_bytes(data)
        return f"sha256:{digest}"

    layer_descs = []
    diff_ids = []
    for blob in layers:
        layer_descs.append({
            "mediaType": "application/vnd.oci.image.layer.v1.tar+gzip",
            "digest": put(blob), "size": len(blob)})
        diff_ids.append("sha256:" + hashlib.sha256(blob).hexdigest())
    config = {"os": platform[0], "architecture": platform[1],
              "rootfs": {"type": "layers", "diff_ids": diff_ids},
              "config": config_extra or {}}
    config_blob = json.dumps(config).encode()
    manifest = {"schemaVersion": 2,
                "mediaType": "application/vnd.oci.image.manifest.v1+json",
                "config": {
                    "mediaType": "application/vnd.oci.image.config.v1+json",
                    "digest": put(config_blob), "size": len(config_blob)},
                "layers": layer_descs}
    manifest_blob = json.dumps(manifest).encode()
    manifest_desc = {
        "mediaType": "application/vnd.oci.image.manifest.v1+json",
        "digest": put(manifest_blob), "size": len(manifest_blob),
        "platform": {"os": platform[0], "architecture": platform[1]},
    }
    top = [dict(manifest_desc)] + [dict(m) for m in extra_manifests]
    if nested_index:
        inner = json.dumps({"schemaVersion": 2, "manifests": top}).encode()
        top = [{"mediaType": "application/vnd.oci.image.index.v1+json",
                "digest": put(inner), "size": len(inner)}]
    top[0].setdefault("annotations", {})[
        "org.opencontainers.image.ref.name"] = ref
    (layout / "index.json").write_text(json.dumps(
        {"schemaVersion": 2, "manifests": top}))
    return layout


def reference_layer_squash(layers: list[bytes]) -> dict[str, tuple]:
    """Dict-based reference for layer application with whiteout semantics;
    shares no code with the converter's filesystem implementation."""
    tree: dict[str, tuple] = {}

    def add_parents(name: str) -> None:
        # Extraction materializes implied parent directories as it goes; a
        # later whiteout removes only its named path, parents survive.
        parent = name.rsplit("/", 1)[0] if "/" in name else ""
        while parent:
            tree.setdefault(parent, ("dir",))
            parent = parent.rsplit("/", 1)[0] if "/" in parent else ""

    for blob in layers:
        with tarfile.open(fileobj=io.BytesIO(blob), mode="r:*") as tar:
            for member in tar:
                name = member.name.lstrip("./").strip("/")
                if not name:
                    continue
                base = name.rsplit("/", 1)[-1]
                parent = name.rsplit("/", 1)[0] if "/" in name else ""
                if not base.startswith(".wh."):
                    add_parents(name)
                if base == ".wh..wh..opq":
                    prefix = parent + "/" if parent else ""
                    for existing in list(tree):
                        if existing.startswith(prefix) and existing != parent:
                            del tree[existing]
                elif base.startswith(".wh."):
                    victim = (parent + "/" if parent else "") + base[4:]
                    for existing in list(tree):
                        if existing == victim or existing.startswith(
                                victim + "/"):
                            del tree[existing]
                elif member.issym():
                    tree[name] = ("symlink", member.linkname)
                elif member.isdir():
                    tree[name] = ("dir",)
                elif member.isfile():
                    tree[name] = ("file", tar.extractfile(member).read())
    return tree


class TestOciConversion:
    def test_multi_platform_layout(self, tmp_path, sheet):
        layout = make_oci_layout(tmp_path, "miniroot:3.19",
                                 platforms=("linux/amd64", "linux/arm64"),
                                 files={"bin/sh": "#!shell"},
                                 env=("PATH=/usr/bin:/bin",), cmd=("sh",))
        components = convert_oci(layout, tmp_path / "out")
        assert len(components) == 2
        by_env = {c.meta.id.environment: c for c in components}
        assert set(by_env) == {"linux/amd64", "linux/arm64"}
        amd = by_env["linux/amd64"]
        assert amd.meta.id.name == "docker.io/library/miniroot"
        assert amd.meta.id.version == "3.19"
        assert dict(amd.meta.requirements) == {"os": "=linux", "cpu": "=amd64"}
        assert dict(by_env["linux/arm64"].meta.requirements)["cpu"] == "=aarch64"
        assert amd.meta.hints.env == ("PATH=/usr/bin:/bin",)
        assert amd.meta.hints.cmd == ("sh",)
        check_embedded_copy(amd)

    def test_whiteouts_match_reference_squash(self, tmp_path):
        layers = [
            _tgz({
                "etc/config.d": ("dir",),
                "etc/config.d/a.conf": b"a",
                "etc/config.d/b.conf": b"b",
                "var/cache/old.bin": b"stale",
                "usr/bin/tool": b"v1",
                "usr/lib/libz.so": ("symlink", "libz.so.1"),
            }),
            _tgz({
                "etc/config.d/.wh..wh..opq": b"",
                "etc/config.d/c.conf": b"c",
                "var/cache/.wh.old.bin": b"",
                "usr/bin/tool": b"v2",
            }),
        ]
        layout = custom_layout(tmp_path, layers)
        (component,) = convert_oci(layout, tmp_path / "out")
        index = payload_index(component.payload_path)

        got = {}
        for name, (kind, _mode, payload) in index.items():
            if not name.startswith("rootfs/"):
                continue
            stripped = name[len("rootfs/"):]
            got[stripped] = (kind,) if kind == "dir" else (kind, payload)
        reference = {name: value if value[0] != "dir" else ("dir",)
                     for name, value in reference_layer_squash(layers).items()}
        assert got == reference
        assert "rootfs/etc/config.d/a.conf" not in index
        assert index["rootfs/etc/config.d/c.conf"][2] == b"c"
        assert index["rootfs/usr/bin/tool"][2] == b"v2"
        assert not any(".wh." in name for name in index)

    def test_attestation_manifests_skipped(self, tmp_path):
        layers = [_tgz({"etc/hostname": b"demo"})]
        layout = custom_layout(tmp_path, layers)
        # Append an unknown-platform descriptor the way attestation
        # tooling does; it points at the same manifest blob.
        index_doc = json.loads((layout / "index.json").read_text())
        clone = dict(index_doc["manifests"][0])
        clone.pop("annotations", None)
        clone["platform"] = {"os": "unknown", "architecture": "unknown"}
        index_doc["manifests"].append(clone)
        (layout / "index.json").write_text(json.dumps(index_doc))
        components = convert_oci(layout, tmp_path / "out")
        assert len(components) == 1
        assert components[0].meta.id.environment == "linux/amd64"

    def test_nested_index(self, tmp_path):
        layout = custom_layout(tmp_path, [_tgz({"etc/os": b"x"})],
                               nested_index=True, ref="base:2.0")
        (component,) = convert_oci(layout, tmp_path / "out")
        assert component.meta.id.version == "2.0"

    def test_name_version_overrides(self, tmp_path):
        layout = custom_layout(tmp_path, [_tgz({"etc/a": b"1"})], ref="x:1")
        (component,) = convert_oci(layout, tmp_path / "out",
                                   name="ghcr.io/org/base", version="9.9")
        assert component.meta.id.name == "ghcr.io/org/base"
        assert component.meta.id.version == "9.9"

    def test_missing_ref_and_no_override_rejected(self, tmp_path):
        layout = custom_layout(tmp_path, [_tgz({"etc/a": b"1"})], ref="x:1")
        index_doc = json.loads((layout / "index.json").read_text())
        del index_doc["manifests"][0]["annotations"]
        (layout / "index.json").write_text(json.dumps(index_doc))
        with pytest.raises(ConversionError):
            convert_oci(layout, tmp_path / "out")

    def test_layout_as_tarball(self, tmp_path):
        layout = custom_layout(tmp_path, [_tgz({"etc/a": b"1"})])
        packed = tmp_path / "image.tar"
        with tarfile.open(packed, "w") as tar:
            tar.add(layout, arcname="layout")
        (component,) = convert_oci(packed, tmp_path / "out")
        assert payload_index(component.payload_path)[
            "rootfs/etc/a"][2] == b"1"

    def test_config_hints_user_and_workdir(self, tmp_path):
        layout = custom_layout(
            tmp_path, [_tgz({"srv/.keep": b""})],
            config_extra={"User": "app", "WorkingDir": "/srv",
                          "Entrypoint": ["/bin/run"], "Cmd": ["--serve"]})
        (component,) = convert_oci(layout, tmp_path / "out")
        hints = component.meta.hints
        assert hints.user == "app"
        assert hints.workdir == "/srv"
        assert hints.entrypoint == ("/bin/run",)
        assert hints.cmd == ("--serve",)

    def test_deterministic_output(self, tmp_path):
        layout = make_oci_layout(tmp_path, "det:1", files={"etc/x": "y"})
        first = convert_oci(layout, tmp_path / "o1")[0]
        second = convert_oci(layout, tmp_path / "o2")[0]
        assert first.payload_path.read_bytes() == second.payload_path.read_bytes()


class TestXDepsRules:
    def test_rule_matching_and_expansion(self):
        rules = XDeps.parse(
            "[FOR] PyPI opencv-python >=4\n"
            "[DEP] Apt libgl1-mesa-glx any\n"
            "[CONTEXT] opencv.version {version}\n"
            "\n"
            "[FOR] PyPI torch any\n"
            "[DEP] Apt libgomp1 any\n")
        from cirforge.versions import Version

        deps, context = rules.for_component(
            ManagerKind.PYPI, "opencv-python", Version(ManagerKind.PYPI,
                                                       "4.10.0.84"))
        assert [(d.manager, d.name) for d in deps] == [
            (ManagerKind.APT, "libgl1-mesa-glx")]
        assert context == [("opencv.version", "4.10.0.84")]

        deps, context = rules.for_component(
            ManagerKind.PYPI, "opencv-python", Version(ManagerKind.PYPI, "3.4"))
        assert deps == [] and context == []

        deps, _ = rules.for_component(
            ManagerKind.PYPI, "torch", Version(ManagerKind.PYPI, "2.1.0"))
        assert [d.name for d in deps] == ["libgomp1"]

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "rules.xdeps"
        path.write_text(OPENCV_XDEPS)
        rules = XDeps.load(path)
        deps, context = rules.for_component(
            ManagerKind.PYPI, "opencv-python",
            __import__("cirforge.versions", fromlist=["Version"]).Version(
                ManagerKind.PYPI, "4.10.0.84"))
        assert len(deps) == 2
        assert context == [("opencv.version", "4.10.0.84")]

    def test_dep_before_for_rejected(self):
        with pytest.raises(MetadataError):
            XDeps.parse("[DEP] Apt libgl1 any\n")

    def test_unknown_line_rejected(self):
        with pytest.raises(MetadataError):
            XDeps.parse("[FOR] PyPI x any\n[BOGUS] y\n")


class TestSdistConversion:
    def test_build_and_convert(self, tmp_path, sheet):
        project = tmp_path / "proj"
        (project / "tinysrc").mkdir(parents=True)
        (project / "tinysrc" / "__init__.py").write_text("VALUE = 41\n")
        (project / "pyproject.toml").write_text(
            '[build-system]\n'
            'requires = ["setuptools"]\n'
            'build-backend = "setuptools.build_meta"\n'
            '[project]\n'
            'name = "tinysrc"\n'
            'version = "0.9"\n')
        sdist = tmp_path / "tinysrc-0.9.tar.gz"
        with tarfile.open(sdist, "w:gz") as tar:
            tar.add(project, arcname="tinysrc-0.9")

        components = convert_sdist(sdist, sheet, tmp_path / "out",
                                   timeout=300.0)
        assert len(components) == 1
        meta = components[0].meta
        assert meta.id.manager is ManagerKind.PYPI
        assert meta.id.name == "tinysrc"
        assert meta.id.version == "0.9"
        index = payload_index(components[0].payload_path)
        init = index[f"rootfs/{SITE_PACKAGES}/tinysrc/__init__.py"]
        assert init[2] == b"VALUE = 41\n"

    def test_unbuildable_sdist_reports_failure(self, tmp_path, sheet):
        broken = tmp_path / "broken-1.0.tar.gz"
        with tarfile.open(broken, "w:gz") as tar:
            info = tarfile.TarInfo("broken-1.0/setup.py")
            payload = b"raise SystemExit('no build for you')\n"
            info.size = len(payload)
            tar.addfile(info, io.BytesIO(payload))
        with pytest.raises(ConversionError):
            convert_sdist(broken, sheet, tmp_path / "out", timeout=120.0)
