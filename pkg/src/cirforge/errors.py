"""Exception taxonomy.

Every failure the package raises on purpose derives from CirError so callers
(and the CLI) can map errors to outcomes without matching on strings. The
exit_code attribute is what the CLI process returns for that category.
"""

from __future__ import annotations


class CirError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1
    category = "error"


class UsageError(CirError):
    """Caller misuse: bad arguments, mixed ecosystems, malformed requests."""

    category = "usage"


class ConfigurationError(CirError):
    """Bad or missing configuration (probe overrides, config files, env)."""

    category = "config"


class ManifestError(CirError):
    """A CIR manifest failed to parse or validate."""

    category = "manifest"


class MetadataError(CirError):
    """A component metadata document failed to parse or validate."""

    category = "metadata"


class InvalidNameError(MetadataError):
    """A package name is empty or not canonicalizable for its ecosystem."""


class VersionParseError(MetadataError):
    """A version string does not parse under its ecosystem's grammar."""


class SpecifierParseError(MetadataError):
    """A version specifier does not parse under its ecosystem's grammar."""


class LockFileError(CirError):
    """A lock file failed to parse or validate."""

    category = "lock"


class ResolutionError(CirError):
    """No component assignment satisfies the dependency set.

    Carries the derivation chain that proves unsatisfiability, one line per
    derived step, so the failure is explainable rather than a bare 'no'.
    """

    exit_code = 2
    category = "resolution"

    def __init__(self, message: str, derivation: tuple[str, ...] = ()):
        super().__init__(message)
        self.derivation = tuple(derivation)

    def explain(self) -> str:
        lines = [str(self)]
        lines.extend(f"  because {step}" for step in self.derivation)
        return "\n".join(lines)


class ContextConflictError(ResolutionError):
    """Two sources assign different values to the same build-context key."""

    def __init__(self, key: str, ours: str, theirs: str, derivation: tuple[str, ...] = ()):
        super().__init__(
            f"context key {key!r} has conflicting values {ours!r} and {theirs!r}",
            derivation,
        )
        self.key = key
        self.ours = ours
        self.theirs = theirs


class UnsupportedPlatformError(ResolutionError):
    """The target platform is outside what the pipeline can deploy to."""


class FetchError(CirError):
    """A registry or upstream transfer failed or was incomplete."""

    exit_code = 3
    category = "fetch"


class NotFoundError(FetchError):
    """A requested package, version, or component does not exist."""


class DigestMismatchError(FetchError):
    """Payload bytes do not hash to the digest the index promised."""

    def __init__(self, expected: str, actual: str, what: str = "payload"):
        super().__init__(f"{what} digest mismatch: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class StoreError(CirError):
    """Local component store violation (corruption, immutability breach)."""

    category = "store"


class ImmutabilityError(StoreError):
    """An attempt to publish different bytes under an existing identity."""


class AssemblyError(CirError):
    """Rootfs assembly failed (layer conflicts, misplaced files, bad plan)."""

    exit_code = 4
    category = "assembly"


class ConversionError(CirError):
    """An upstream artifact could not be converted to a uniform component."""

    category = "conversion"
