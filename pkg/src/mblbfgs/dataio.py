"""Dataset ingestion: LIBSVM text files and seeded synthetic generation."""
from __future__ import annotations

import numpy as np

from .errors import DataError
from .linalg import Dataset, SparseExample
from .sampling import SeededRng

_LABEL_MAP = {"1": 1, "+1": 1, "-1": -1, "0": -1,
              "1.0": 1, "+1.0": 1, "-1.0": -1, "0.0": -1}


def parse_libsvm(path, dimension: int | None = None) -> Dataset:
    """Parse a LIBSVM binary-classification file.

    Lines are ``<label> <idx>:<val> ...`` with 1-based indices. Labels may
    follow either the {0,1} or the {-1,+1} convention; both are mapped to
    {-1,+1}. The dimension defaults to the largest index seen.
    """
    examples = []
    max_index = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            label = _LABEL_MAP.get(tokens[0])
            if label is None:
                raise DataError(f"line {lineno}: unrecognized label {tokens[0]!r}")
            indices, values = [], []
            for col, tok in enumerate(tokens[1:], start=2):
                try:
                    raw_idx, raw_val = tok.split(":", 1)
                    idx = int(raw_idx) - 1
                    val = float(raw_val)
                except ValueError:
                    raise DataError(
                        f"line {lineno}, token {col}: cannot parse {tok!r}") from None
                if idx < 0:
                    raise DataError(f"line {lineno}, token {col}: index must be >= 1")
                if indices and idx <= indices[-1]:
                    raise DataError(
                        f"line {lineno}, token {col}: indices must be strictly increasing")
                indices.append(idx)
                values.append(val)
            if indices:
                max_index = max(max_index, indices[-1])
            examples.append((np.array(indices, dtype=np.int64),
                             np.array(values, dtype=np.float64), label))
    if not examples:
        raise DataError(f"{path}: no examples found")
    d = dimension if dimension is not None else max_index + 1
    if d < 1:
        raise DataError(f"{path}: could not infer a positive dimension")
    return Dataset(
        examples=[SparseExample(indices=i, values=v, label=lab)
                  for i, v, lab in examples],
        dimension=d,
    )


def serialize_libsvm(dataset: Dataset, path) -> None:
    """Write a dataset back to LIBSVM text (1-based indices, +-1 labels)."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset.examples:
            feats = " ".join(
                f"{int(idx) + 1}:{val:.17g}"
                for idx, val in zip(ex.indices, ex.values)
            )
            label = "+1" if ex.label == 1 else "-1"
            fh.write(f"{label} {feats}\n" if feats else f"{label}\n")


def make_synthetic(n: int, d: int, nnz_per_row: int, seed: int,
                   separable_margin: float = 0.0,
                   feature_decades: float = 0.0) -> Dataset:
    """Sparse synthetic binary classification data.

    Each row gets ``nnz_per_row`` nonzero N(0,1) features at random
    positions. With a positive margin, labels come from a planted unit-norm
    hyperplane; rows whose score falls inside the margin band are nudged
    along the planted direction (restricted to their support) until the
    score clears it, keeping feature magnitudes bounded. With margin 0 the
    labels are random coin flips.

    ``feature_decades`` spreads per-feature scales log-uniformly over that
    many decades, producing the ill-conditioned geometry typical of raw
    (unnormalized) data; 0 keeps all features at unit scale.
    """
    if not 1 <= nnz_per_row <= d:
        raise DataError(f"nnz_per_row={nnz_per_row} outside [1, d={d}]")
    rng = SeededRng(seed)
    normal = rng._gen.standard_normal  # single stream keeps replay exact
    scales = np.logspace(-feature_decades / 2.0, feature_decades / 2.0, d)
    plant_raw = normal(d) / scales  # keeps every scaled feature informative
    plant = plant_raw / np.sqrt(np.dot(plant_raw, plant_raw))
    examples = []
    for _ in range(n):
        while True:
            idx = np.sort(rng.choice(d, nnz_per_row))
            vals = normal(nnz_per_row) * scales[idx]
            u = plant[idx]
            uu = float(np.dot(u, u))
            # a support where the plant nearly vanishes cannot carry a margin
            if separable_margin == 0 or uu >= 1e-6:
                break
        if separable_margin > 0:
            z = float(np.dot(vals, u))
            if abs(z) < separable_margin:
                target = separable_margin if z >= 0 else -separable_margin
                vals = vals + ((target - z) / uu) * u
                z = target
            label = 1 if z > 0 else -1
        else:
            label = 1 if rng.uniform() < 0.5 else -1
        examples.append(SparseExample(indices=idx, values=vals, label=label))
    return Dataset(examples=examples, dimension=d)
