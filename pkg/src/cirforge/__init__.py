"""Lazy-build container pipeline.

Pre-build an interpreted app into a small portable archive holding only a
manifest of declarative direct dependencies plus local files; on the
target, deterministically resolve that manifest against a platform sheet
into a set of immutable uniform components, fetch what the local cache
lacks, and assemble a runnable root filesystem with a runtime config.
"""

from .build import (
    AssemblyPlan,
    BuildResult,
    LockFile,
    assemble,
    build_from_lock,
    lazy_build,
    make_plan,
    parse_lock,
)
from .environment import es_select, probe_specsheet
from .errors import (
    AssemblyError,
    CirError,
    ConfigurationError,
    ConversionError,
    DigestMismatchError,
    FetchError,
    LockFileError,
    ManifestError,
    MetadataError,
    NotFoundError,
    ResolutionError,
    StoreError,
    UsageError,
)
from .model import (
    BuildContext,
    CirManifest,
    ComponentId,
    ConfigHints,
    DependencyItem,
    ManagerKind,
    SpecSheet,
    UniformComponentMeta,
    parse_manifest,
    parse_meta,
    serialize_meta,
)
from .prebuild import analyze_project, build_manifest, pack_cir, read_cir
from .registry import HttpRegistryClient, LocalRegistryClient, RegistryService
from .resolver import ResolutionResult, resolve, select_component
from .store import LocalStore
from .verify import verify_resolution
from .versions import Version, matches, parse_specifier, vs_select

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "AssemblyPlan",
    "BuildContext",
    "BuildResult",
    "CirError",
    "CirManifest",
    "ComponentId",
    "ConfigHints",
    "ConfigurationError",
    "ConversionError",
    "DependencyItem",
    "DigestMismatchError",
    "FetchError",
    "HttpRegistryClient",
    "LocalRegistryClient",
    "LocalStore",
    "LockFile",
    "LockFileError",
    "ManagerKind",
    "ManifestError",
    "MetadataError",
    "NotFoundError",
    "RegistryService",
    "ResolutionError",
    "ResolutionResult",
    "SpecSheet",
    "StoreError",
    "UniformComponentMeta",
    "UsageError",
    "Version",
    "analyze_project",
    "assemble",
    "build_from_lock",
    "build_manifest",
    "es_select",
    "lazy_build",
    "make_plan",
    "matches",
    "pack_cir",
    "parse_lock",
    "parse_manifest",
    "parse_meta",
    "parse_specifier",
    "probe_specsheet",
    "read_cir",
    "resolve",
    "select_component",
    "serialize_meta",
    "verify_resolution",
    "vs_select",
    "__version__",
]
