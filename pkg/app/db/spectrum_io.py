from __future__ import annotations

import re
from pathlib import Path
from typing import Union

import numpy as np

from app.db.models import BoundaryCondition, Spectrum, SpectrumSource
from app.errors import ConfigurationError

HEADER_RE = re.compile(
    r"^#\s*bc=(?P<bc>[DN])\s+lambda_max=(?P<lambda_max>\S+)\s+source=(?P<source>\S+)\s*$"
)


def format_spectrum(spectrum: Spectrum) -> str:
    lines = [
        f"# bc={spectrum.bc.value} lambda_max={spectrum.lambda_max!r} "
        f"source={spectrum.source.value}"
    ]
    lines.extend(
        f"{lam:.12e},{int(mult):d}" for lam, mult in zip(spectrum.levels, spectrum.multiplicities)
    )
    return "\n".join(lines) + "\n"


def parse_spectrum(text: str) -> Spectrum:
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    if not rows:
        raise ConfigurationError("empty spectrum file")
    match = HEADER_RE.match(rows[0])
    if not match:
        raise ConfigurationError(f"bad spectrum header: {rows[0]!r}")

    levels: list[float] = []
    multiplicities: list[int] = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            lam_text, mult_text = row.split(",")
            levels.append(float(lam_text))
            multiplicities.append(int(mult_text))
        except ValueError as exc:
            raise ConfigurationError(f"bad spectrum line {lineno}: {row!r}") from exc

    return Spectrum(
        levels=np.array(levels, dtype=float),
        multiplicities=np.array(multiplicities, dtype=np.int64),
        bc=BoundaryCondition(match.group("bc")),
        lambda_max=float(match.group("lambda_max")),
        source=SpectrumSource(match.group("source")),
    )


def write_spectrum(spectrum: Spectrum, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(format_spectrum(spectrum), encoding="utf-8")
    tmp.replace(path)
    return path


def read_spectrum(path: Union[str, Path]) -> Spectrum:
    return parse_spectrum(Path(path).read_text(encoding="utf-8"))
