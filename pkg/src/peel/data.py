"""Dataset ingestion and the synthetic population generator."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from peel.errors import ConfigurationError

MISSING = {"", "na", "nan", "null", "none", "?"}


@dataclass
class Dataset:
    """Records ready for a mechanism.

    ``records`` is an int array of category codes (categorical) or an ``n x k`` float
    array in ``[-1, 1]`` (numeric).
    """

    records: np.ndarray
    role: str
    k: int
    dropped_rows: int = 0
    labels: Optional[list[str]] = None
    columns: tuple[str, ...] = ()
    warnings: list[str] = field(default_factory=list)


def _label_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def load_dataset(path, columns: Sequence[str], roles: Sequence[str]) -> Dataset:
    """Read selected columns of a CSV file with a header row.

    Numeric columns are min-max scaled to ``[-1, 1]`` over the whole file; a constant
    column maps to 0 with a warning. A single categorical column is mapped to dense
    codes ``0..k-1`` in sorted label order. Rows with a missing value in any selected
    column are dropped and counted.

    Args:
        path: CSV file.
        columns: column names to keep.
        roles: ``"numeric"`` or ``"categorical"`` for each column.

    Returns:
        A :class:`Dataset`.

    Raises:
        ConfigurationError: empty selection, unknown column, mixed roles, more than one
            categorical column, or fewer than three categories.
    """
    columns, roles = tuple(columns), tuple(r.lower() for r in roles)
    if not columns:
        raise ConfigurationError("empty column selection")
    if len(roles) != len(columns):
        raise ConfigurationError("need exactly one role per column")
    if set(roles) - {"numeric", "categorical"}:
        raise ConfigurationError(f"unknown column roles: {sorted(set(roles) - {'numeric', 'categorical'})}")
    if len(set(roles)) > 1:
        raise ConfigurationError("one run uses one mechanism: select only numeric or only categorical columns")
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"dataset {p} does not exist")
    with p.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise ConfigurationError(f"columns not in dataset: {missing}")
        rows, dropped = [], 0
        for row in reader:
            vals = [(row.get(c) or "").strip() for c in columns]
            if any(v.lower() in MISSING for v in vals):
                dropped += 1
                continue
            rows.append(vals)
    role = roles[0]
    notes = []
    if role == "categorical":
        if len(columns) != 1:
            raise ConfigurationError("categorical runs take exactly one column")
        labels = sorted({r[0] for r in rows}, key=_label_key)
        if len(labels) < 3:
            raise ConfigurationError(
                f"column {columns[0]!r} has {len(labels)} categories but k >= 3 is required; "
                "merge it with another categorical column into a joint encoding")
        code = {lab: i for i, lab in enumerate(labels)}
        recs = np.array([code[r[0]] for r in rows], dtype=np.int64)
        return Dataset(recs, role, len(labels), dropped, labels, columns, notes)
    try:
        raw = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    except ValueError as exc:
        raise ConfigurationError(f"non-numeric value in a numeric column: {exc}") from exc
    if raw.shape[0] == 0:
        raise ConfigurationError("no complete rows in the selected columns")
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    span = hi - lo
    scaled = np.zeros_like(raw)
    for j, c in enumerate(columns):
        if span[j] == 0:
            msg = f"column {c!r} is constant; mapped to 0"
            warnings.warn(msg)
            notes.append(msg)
        else:
            scaled[:, j] = 2.0 * (raw[:, j] - lo[j]) / span[j] - 1.0
    return Dataset(scaled, role, len(columns), dropped, None, columns, notes)


def default_frequencies(k: int) -> np.ndarray:
    """Zipf-like profile ``f_j proportional to 1/(j+1)``."""
    f = 1.0 / np.arange(1, k + 1)
    return f / f.sum()


def default_means(k: int) -> np.ndarray:
    """Attribute means evenly spread over ``[-0.6, 0.6]``."""
    return np.linspace(-0.6, 0.6, k)


def synthetic_categorical(n: int, frequencies, rng: np.random.Generator) -> np.ndarray:
    """Categories with exact counts ``round(n f_j)`` (largest remainders), in random order."""
    f = np.asarray(frequencies, dtype=float)
    if f.ndim != 1 or f.size < 3 or np.any(f < 0) or not math.isclose(f.sum(), 1.0, rel_tol=1e-9):
        raise ConfigurationError("synthetic frequencies must be >= 3 nonnegative values summing to 1")
    raw = n * f
    counts = np.floor(raw).astype(np.int64)
    short = n - counts.sum()
    counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
    cats = np.repeat(np.arange(f.size), counts)
    return rng.permutation(cats)


def synthetic_numeric(n: int, means, rng: np.random.Generator, concentration: float = 4.0) -> np.ndarray:
    """Records in ``[-1, 1]^k``; attribute ``j`` is ``2 Beta(a_j, b_j) - 1`` with mean ``means[j]``."""
    m = np.asarray(means, dtype=float)
    if m.ndim != 1 or m.size < 3 or np.any(np.abs(m) >= 1):
        raise ConfigurationError("synthetic means must be >= 3 values strictly inside (-1, 1)")
    a = concentration * (1 + m) / 2
    b = concentration * (1 - m) / 2
    return 2.0 * rng.beta(a, b, size=(n, m.size)) - 1.0


def write_synthetic_csv(path, n: int, k: int, role: str, rng: np.random.Generator,
                        frequencies=None, means=None) -> list[str]:
    """Write a synthetic dataset; returns the column names written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if role == "categorical":
            cats = synthetic_categorical(n, default_frequencies(k) if frequencies is None else frequencies, rng)
            width = len(str(k if frequencies is None else len(frequencies)))
            w.writerow(["category"])
            w.writerows([[f"c{int(c):0{width}d}"] for c in cats])
            return ["category"]
        if role != "numeric":
            raise ConfigurationError(f"unknown role {role!r}")
        x = synthetic_numeric(n, default_means(k) if means is None else means, rng)
        cols = [f"a{j}" for j in range(x.shape[1])]
        w.writerow(cols)
        w.writerows([[repr(float(v)) for v in row] for row in x])
        return cols
