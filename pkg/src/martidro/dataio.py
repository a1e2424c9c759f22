"""Dataset ingestion, synthetic generators, splits, and standardization."""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .errors import ParseError

_TOKEN = re.compile(r"\S+")


def parse_libsvm(source) -> Dataset:
    """Parse sparse ``label idx:val ...`` lines into a dense dataset.

    Indices are 1-based and must be strictly increasing within a line;
    missing indices are zero-filled and the width is the largest index seen
    anywhere in the input.  ``#`` starts a comment running to the end of the
    line.  Any token that cannot be fully consumed raises
    :class:`~martidro.errors.ParseError` with its line and column.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    rows: list[dict[int, float]] = []
    labels: list[float] = []
    max_index = 0
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0]
        tokens = list(_TOKEN.finditer(line))
        if not tokens:
            continue
        label_tok = tokens[0]
        try:
            label = float(label_tok.group())
        except ValueError:
            raise ParseError(lineno, label_tok.start() + 1, f"bad label {label_tok.group()!r}")
        if not math.isfinite(label):
            raise ParseError(lineno, label_tok.start() + 1, "non-finite label")
        entries: dict[int, float] = {}
        prev_index = 0
        for tok in tokens[1:]:
            col = tok.start() + 1
            text = tok.group()
            head, sep, tail = text.partition(":")
            if not sep:
                raise ParseError(lineno, col, f"expected index:value, got {text!r}")
            try:
                index = int(head)
            except ValueError:
                raise ParseError(lineno, col, f"bad feature index {head!r}")
            if index < 1:
                raise ParseError(lineno, col, f"feature index must be >= 1, got {index}")
            if index <= prev_index:
                raise ParseError(lineno, col, f"indices must be strictly increasing ({index} after {prev_index})")
            try:
                value = float(tail)
            except ValueError:
                raise ParseError(lineno, col, f"bad feature value {tail!r}")
            if not math.isfinite(value):
                raise ParseError(lineno, col, "non-finite feature value")
            entries[index] = value
            prev_index = index
        rows.append(entries)
        labels.append(label)
        max_index = max(max_index, prev_index)
    if not rows:
        raise ParseError(1, 1, "no data lines")
    dim = max(max_index, 1)
    features = np.zeros((len(rows), dim))
    for i, entries in enumerate(rows):
        for index, value in entries.items():
            features[i, index - 1] = value
    return Dataset(features, targets=np.array(labels))


def serialize_libsvm(data: Dataset) -> str:
    """Inverse of :func:`parse_libsvm` for datasets with targets.

    Zeros are skipped, so the width survives a round trip only if some row
    has a nonzero final feature (always the case for continuous data).
    """
    if data.targets is None:
        raise ValueError("serialization needs targets")
    lines = []
    for label, row in zip(data.targets, data.features):
        parts = [repr(float(label))]
        parts += [f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v != 0.0]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def gen_two_ring(n_raw: int, eta: float, seed=0) -> Dataset:
    """Two concentric classes in the plane separated by a radial margin.

    Draws ``n_raw`` standard normal points, keeps those whose radius falls
    outside ``(sqrt(2)/eta, eta*sqrt(2))``, and labels them by the sign of
    ``radius - sqrt(2)``.  Larger ``eta`` widens the excluded margin.
    """
    if not eta > 1:
        raise ValueError(f"eta must exceed 1, got {eta}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((int(n_raw), 2))
    radius = np.linalg.norm(z, axis=1)
    keep = (radius <= math.sqrt(2) / eta) | (radius >= eta * math.sqrt(2))
    z = z[keep]
    labels = np.where(np.linalg.norm(z, axis=1) >= math.sqrt(2), 1.0, -1.0)
    return Dataset(z, targets=labels)


def two_ring_keep_probability(eta: float) -> float:
    """Exact retention probability of :func:`gen_two_ring` (chi-square radii)."""
    return (1.0 - math.exp(-1.0 / eta**2)) + math.exp(-(eta**2))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def split_dataset(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded shuffle into disjoint, exhaustive train and test subsets."""
    n = data.n_samples
    if n < 2:
        raise ValueError("need at least two samples to split")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = min(max(int(round(spec.train_fraction * n)), 1), n - 1)
    idx_train, idx_test = order[:n_train], order[n_train:]

    def take(idx):
        return Dataset(
            data.features[idx],
            targets=None if data.targets is None else data.targets[idx],
            names=None if data.names is None else tuple(data.names[i] for i in idx),
        )

    return take(idx_train), take(idx_test)


def standardize(train: Dataset, test: Dataset | None = None):
    """Zero-mean unit-variance scaling fit on train, applied to both splits."""
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std[std == 0] = 1.0

    def apply(ds):
        return Dataset((ds.features - mean) / std, targets=ds.targets, names=ds.names)

    return (apply(train), None if test is None else apply(test), (mean, std))


def write_csv(data: Dataset, path):
    """Plain CSV emission for inspection: one column per feature plus target."""
    header = [f"x{j + 1}" for j in range(data.n_features)]
    cols = [data.features]
    if data.targets is not None:
        header.append("target")
        cols.append(data.targets[:, None])
    table = np.hstack(cols)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
