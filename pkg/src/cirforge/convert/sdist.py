"""Source distribution conversion: build wheels, then convert those.

An sdist has no environment tag of its own; it is built once per
configured interpreter with ``pip wheel --no-deps --no-build-isolation``
and each produced wheel goes through the wheel converter. Interpreters
that fail to build are reported; if every one fails the conversion errors
out with the collected build logs.
"""

from __future__ import annotations

import subprocess
import sys
import tempfile
from pathlib import Path

from ..errors import ConversionError
from ..model import SpecSheet
from . import ConvertedComponent
from .wheel import convert_wheel
from .xdeps import XDeps

__all__ = ["convert_sdist", "default_interpreters"]


def default_interpreters() -> dict[str, str]:
    return {"%d.%d" % sys.version_info[:2]: sys.executable}


def convert_sdist(path: Path, sheet: SpecSheet, out_dir: Path,
                  interpreters: dict[str, str] | None = None,
                  xdeps: XDeps | None = None,
                  timeout: float = 600.0) -> list[ConvertedComponent]:
    path = Path(path)
    if interpreters is None:
        interpreters = default_interpreters()
    if not interpreters:
        raise ConversionError("no interpreters configured for sdist builds")

    components: list[ConvertedComponent] = []
    failures: list[str] = []
    for label in sorted(interpreters):
        executable = interpreters[label]
        with tempfile.TemporaryDirectory(prefix="sdist-build-") as scratch:
            command = [executable, "-m", "pip", "wheel", "--no-deps",
                       "--no-build-isolation", "--no-index", "-w", scratch,
                       str(path)]
            try:
                run = subprocess.run(command, capture_output=True, text=True,
                                     timeout=timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                failures.append(f"{label} ({executable}): {exc}")
                continue
            if run.returncode != 0:
                tail = (run.stderr or run.stdout).strip().splitlines()[-8:]
                failures.append(f"{label} ({executable}): pip wheel failed:\n  "
                                + "\n  ".join(tail))
                continue
            wheels = sorted(Path(scratch).glob("*.whl"))
            if not wheels:
                failures.append(f"{label} ({executable}): build produced no wheel")
                continue
            for wheel in wheels:
                converted = convert_wheel(wheel, sheet, out_dir, xdeps=xdeps)
                converted.report.act(f"built from sdist with python {label}")
                for failure in failures:
                    converted.report.warn(f"interpreter skipped: {failure}")
                components.append(converted)
    if not components:
        raise ConversionError(
            "sdist build failed for every interpreter:\n" + "\n".join(failures))
    return components
