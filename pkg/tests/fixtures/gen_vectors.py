#!/usr/bin/env python3
"""Regenerate the frozen version-ordering oracle vectors.

Debian pairs are judged by the system dpkg binary
(``dpkg --compare-versions``); PyPI pairs by the ``packaging`` library.
Both are independent of the package under test. Output format, one
comparison per line, tab-separated::

    <apt|pypi> <tab> <a> <tab> <b> <tab> <less|equal|greater>

Run from the repository root:  python3 tests/fixtures/gen_vectors.py
"""

from __future__ import annotations

import random
import subprocess
import sys
from pathlib import Path

from packaging.version import Version as PkgVersion

HERE = Path(__file__).resolve().parent
SEED = 20260817
COUNT = 260  # per ecosystem, on top of the curated edge pairs


def dpkg_relation(a: str, b: str) -> str:
    def check(op: str) -> bool:
        return subprocess.run(
            ["dpkg", "--compare-versions", a, op, b],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
        ).returncode == 0

    if check("lt"):
        return "less"
    if check("gt"):
        return "greater"
    if check("eq"):
        return "equal"
    raise RuntimeError(f"dpkg cannot order {a!r} vs {b!r}")


def pypi_relation(a: str, b: str) -> str:
    va, vb = PkgVersion(a), PkgVersion(b)
    if va < vb:
        return "less"
    if va > vb:
        return "greater"
    return "equal"


def random_debian_version(rng: random.Random) -> str:
    parts = []
    if rng.random() < 0.25:
        parts.append(f"{rng.randint(0, 3)}:")
    segments = [str(rng.randint(0, 30)) for _ in range(rng.randint(1, 3))]
    upstream = ".".join(segments)
    if rng.random() < 0.35:
        upstream += rng.choice(["~rc", "~beta", "~", "a", "b", "+dfsg", "+ds", ".really", "~git"])
        if rng.random() < 0.7:
            upstream += str(rng.randint(0, 9))
    parts.append(upstream)
    if rng.random() < 0.6:
        rev = str(rng.randint(0, 12))
        if rng.random() < 0.3:
            rev += rng.choice(["ubuntu", "+deb12u", "~bpo", "build"]) + str(rng.randint(0, 9))
        parts.append("-" + rev)
    return "".join(parts)


def random_pypi_version(rng: random.Random) -> str:
    out = ""
    if rng.random() < 0.15:
        out += f"{rng.randint(0, 2)}!"
    out += ".".join(str(rng.randint(0, 30)) for _ in range(rng.randint(1, 4)))
    roll = rng.random()
    if roll < 0.25:
        out += rng.choice(["a", "b", "rc", ".alpha", "-beta", "_pre", "c"])
        if rng.random() < 0.8:
            out += str(rng.randint(0, 5))
    if rng.random() < 0.2:
        out += rng.choice([".post", "-", ".rev", "r"])
        if not out.endswith("-") or True:
            out += str(rng.randint(0, 5)) if not out.endswith("-") else str(rng.randint(0, 5))
    if rng.random() < 0.2:
        out += ".dev" + (str(rng.randint(0, 5)) if rng.random() < 0.8 else "")
    if rng.random() < 0.15:
        out += "+" + ".".join(
            rng.choice(["ubuntu", "local", "abc", str(rng.randint(0, 20))])
            for _ in range(rng.randint(1, 2)))
    return out


CURATED_APT = [
    ("1.0", "1.0"), ("1.0", "1.0-0"), ("0:1.0", "1.0"), ("1:0.9", "2.0"),
    ("2.0~rc1", "2.0"), ("2.0~rc1-1", "2.0~rc1"), ("1.0~~", "1.0~"),
    ("1.0~", "1.0"), ("1.0a", "1.0"), ("1.0", "1.0+b1"), ("1.0-1", "1.0-1ubuntu1"),
    ("9.20160110", "9.20161011"), ("1.2.3", "1.2.3really1.1"), ("7.0", "7.0a"),
    ("a", "b"), ("1.00", "1.0"), ("2a", "2."), ("1.2-0", "1.2-00"),
    ("3.0+dfsg-1", "3.0+dfsg-2"), ("1:1.0-1", "2:0.5-1"), ("1.0-1+deb12u1", "1.0-1"),
    ("0.4a6-2", "0.4a6-2.1"), ("1.18.36", "1.18.36+nmu1"), ("00", "0"),
]

CURATED_PYPI = [
    ("1.0", "1.0.0"), ("1.0", "1.0.post1"), ("1.0.dev1", "1.0a1"),
    ("1.0a1", "1.0a1.post1"), ("1.0a1.dev1", "1.0a1"), ("1.0rc1", "1.0"),
    ("1.0", "1.0+local"), ("1.0+abc", "1.0+abc.5"), ("1.0+5", "1.0+abc"),
    ("1!1.0", "2.0"), ("0!1.0", "1.0"), ("1.26.4", "2.0.0rc1"),
    ("4.10.0.84", "4.10.0.82"), ("1.0a2", "1.0b1"), ("1.0b9", "1.0rc0"),
    ("2.0.post0", "2.0.post0.dev5"), ("1.0.dev0", "1.0.dev1"),
    ("v1.0", "1.0"), ("1.0-3", "1.0.post3"), ("1.0alpha3", "1.0a3"),
    ("01.02.03", "1.2.3"), ("1.0c4", "1.0rc4"), ("10.0", "9.9"),
    ("3.10", "3.9"),
]


def main() -> int:
    rng = random.Random(SEED)
    lines: list[str] = []

    pairs = list(CURATED_APT)
    while len(pairs) < len(CURATED_APT) + COUNT:
        a, b = random_debian_version(rng), random_debian_version(rng)
        pairs.append((a, b))
    for a, b in pairs:
        lines.append(f"apt\t{a}\t{b}\t{dpkg_relation(a, b)}")

    pairs = list(CURATED_PYPI)
    while len(pairs) < len(CURATED_PYPI) + COUNT:
        a, b = random_pypi_version(rng), random_pypi_version(rng)
        try:
            PkgVersion(a), PkgVersion(b)
        except Exception:
            continue
        pairs.append((a, b))
    for a, b in pairs:
        lines.append(f"pypi\t{a}\t{b}\t{pypi_relation(a, b)}")

    out = HERE / "version_vectors.tsv"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    apt_count = sum(1 for line in lines if line.startswith("apt"))
    pypi_count = len(lines) - apt_count
    print(f"wrote {out} ({apt_count} apt, {pypi_count} pypi)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
