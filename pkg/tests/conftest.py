import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

import factory  # noqa: E402

from cirforge.model import SpecSheet  # noqa: E402


@pytest.fixture(scope="session")
def amd64_sheet() -> SpecSheet:
    return SpecSheet.from_mapping(factory.AMD64_SHEET)


@pytest.fixture(scope="session")
def arm64_sheet() -> SpecSheet:
    return SpecSheet.from_mapping(factory.ARM64_SHEET)


@pytest.fixture(scope="session")
def tiny_bundle(tmp_path_factory):
    """Converted tiny family in a read-only source store."""
    root = tmp_path_factory.mktemp("tiny")
    artifacts = factory.tiny_family(root / "artifacts")
    store = factory.convert_all(artifacts, root / "store")
    return {"artifacts": artifacts, "store": store, "root": root}


@pytest.fixture(scope="session")
def opencv_bundle(tmp_path_factory):
    """Converted opencv-like family (both architectures) plus xdeps file."""
    root = tmp_path_factory.mktemp("opencv")
    family = factory.opencv_family(root / "artifacts")
    store = factory.convert_all(family["artifacts"], root / "store",
                                xdeps_path=family["xdeps"])
    return {**family, "store": store, "root": root}
