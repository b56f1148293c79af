"""Text-file ingestion, digests, and run manifests for the command line.

Genotype files are whitespace-separated numeric dosage rows, one sample
per line, with an optional leading header of column names prefixed by
'#'.  Phenotype files carry one value per line.  Missing dosages written
as "NA" are imputed to the column mean, and the imputation count is
surfaced so manifests can record it.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__

__all__ = [
    "ParseError",
    "RunManifest",
    "read_genotypes",
    "read_phenotypes",
    "sha256_digest",
    "write_manifest",
]


class ParseError(ValueError):
    """An input file failed to parse; the message names the offending line."""


def read_genotypes(path) -> tuple[np.ndarray, list[str] | None, int]:
    """Read a dosage matrix; returns (matrix, column names or None, NA count).

    The matrix is returned as read (no centering); downstream dataset
    construction owns normalization.
    """
    names = None
    rows: list[list[float]] = []
    width = None
    n_missing = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                if names is None and not rows:
                    names = stripped[1:].split()
                continue
            tokens = stripped.split()
            if width is None:
                width = len(tokens)
            elif len(tokens) != width:
                raise ParseError(
                    "line %d: expected %d values, got %d"
                    % (lineno, width, len(tokens))
                )
            row = []
            for token in tokens:
                if token.upper() == "NA":
                    row.append(np.nan)
                    n_missing += 1
                else:
                    try:
                        row.append(float(token))
                    except ValueError:
                        raise ParseError(
                            "line %d: bad numeric token %r" % (lineno, token)
                        ) from None
            rows.append(row)
    if not rows:
        raise ParseError("no data rows in %s" % path)
    x = np.array(rows, dtype=float)
    if names is not None and len(names) != x.shape[1]:
        raise ParseError(
            "header names %d columns but rows have %d" % (len(names), x.shape[1])
        )
    for j in range(x.shape[1]):
        missing = np.isnan(x[:, j])
        if missing.any():
            if missing.all():
                raise ParseError("column %d has no observed values" % (j + 1))
            x[missing, j] = x[~missing, j].mean()
    return x, names, n_missing


def read_phenotypes(path) -> np.ndarray:
    """Read one numeric value per line."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                values.append(float(stripped))
            except ValueError:
                raise ParseError(
                    "line %d: bad numeric token %r" % (lineno, stripped)
                ) from None
    if not values:
        raise ParseError("no values in %s" % path)
    return np.array(values, dtype=float)


def sha256_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record written next to every command's outputs."""

    command: str
    flags: dict
    seed: object
    input_digests: dict = field(default_factory=dict)
    version: str = __version__
    extras: dict = field(default_factory=dict)


def write_manifest(manifest: RunManifest, path) -> None:
    with open(path, "w") as fh:
        json.dump(dataclasses.asdict(manifest), fh, indent=2, default=str)
        fh.write("\n")
