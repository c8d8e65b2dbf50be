"""Synthetic classification tasks and target transformations.

Synthetic families stand in for image datasets: the kernel/complexity
machinery is dataset-agnostic and desk-scale determinism matters more
than image realism. Inputs are standardized to zero mean / unit variance
per coordinate at generation time so NTK scale is comparable across
families. Classes are balanced within one example by stratified sampling.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidSpec

FAMILIES = ("gaussian_blobs", "two_rings", "xor_grid")


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray          # (n, p) float64
    hard_labels: np.ndarray     # (n,) int64 in [0, num_classes)
    num_classes: int
    split_tag: str = "train"
    seed: int = 0

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.hard_labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidSpec("inputs must be a nonempty (n, p) matrix")
        if y.shape != (x.shape[0],):
            raise InvalidSpec("hard_labels length must match inputs")
        if self.num_classes < 2:
            raise InvalidSpec("num_classes must be >= 2")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise InvalidSpec("labels out of range")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "hard_labels", y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def p(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class TargetMatrix:
    values: np.ndarray  # (n, d); d = 1 for binary +-1 targets
    kind: str           # one_hot | signed_binary | soft | random

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidSpec("target values must be an (n, d) matrix")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def _balanced_labels(n: int, d: int) -> np.ndarray:
    """Stratified labels: class counts differ by at most one."""
    base = n // d
    counts = np.full(d, base, dtype=np.int64)
    counts[: n - base * d] += 1
    return np.repeat(np.arange(d, dtype=np.int64), counts)


def _standardize(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return (x - mu) / sd


def make_synthetic(
    family: str,
    n: int,
    d: int,
    p: int,
    noise: float,
    seed: int,
    split_tag: str = "train",
) -> LabeledDataset:
    """Generate a balanced synthetic classification dataset.

    Families:
      gaussian_blobs: d isotropic clusters with means on a circle in the
        first two coordinates (zero elsewhere), noise = cluster std.
      two_rings: binary task, inner radius 1 vs outer radius 2, noise =
        radial std; extra coordinates are pure noise.
      xor_grid: binary task, label = quadrant parity of the first two
        coordinates; noise jitters the points.
    """
    if family not in FAMILIES:
        raise InvalidSpec(f"unknown family {family!r}")
    if p < 2:
        raise InvalidSpec("p must be >= 2")
    if d < 2 or n < d:
        raise InvalidSpec("need n >= d >= 2")
    if family in ("two_rings", "xor_grid") and d != 2:
        raise InvalidSpec(f"{family} requires d=2")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, d)
    x = np.zeros((n, p))
    if family == "gaussian_blobs":
        angles = 2.0 * np.pi * np.arange(d) / d
        means = np.zeros((d, p))
        means[:, 0] = 2.0 * np.cos(angles)
        means[:, 1] = 2.0 * np.sin(angles)
        x = means[labels] + noise * rng.standard_normal((n, p))
    elif family == "two_rings":
        radius = np.where(labels == 0, 1.0, 2.0) + noise * rng.standard_normal(n)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        x[:, 0] = radius * np.cos(theta)
        x[:, 1] = radius * np.sin(theta)
        if p > 2:
            x[:, 2:] = noise * rng.standard_normal((n, p - 2))
    else:  # xor_grid
        # Quadrant signs chosen from the label, then jittered.
        signs = rng.integers(0, 2, size=n) * 2 - 1
        s0 = signs.astype(np.float64)
        s1 = np.where(labels == 0, s0, -s0)
        x[:, 0] = s0 * rng.uniform(0.25, 1.0, size=n)
        x[:, 1] = s1 * rng.uniform(0.25, 1.0, size=n)
        if p > 2:
            x[:, 2:] = rng.uniform(-1.0, 1.0, size=(n, p - 2))
        x[:, :2] += noise * rng.standard_normal((n, 2))
    x = _standardize(x)
    perm = rng.permutation(n)
    return LabeledDataset(
        inputs=x[perm],
        hard_labels=labels[perm],
        num_classes=d,
        split_tag=split_tag,
        seed=seed,
    )


def binarize_labels(ds: LabeledDataset, boundary: int) -> LabeledDataset:
    """Group classes below `boundary` into class 0 and the rest into 1."""
    if not 0 < boundary < ds.num_classes:
        raise InvalidSpec(f"boundary {boundary} out of range (0, {ds.num_classes})")
    new_labels = (ds.hard_labels >= boundary).astype(np.int64)
    return replace(ds, hard_labels=new_labels, num_classes=2)


def encode_targets(ds: LabeledDataset, kind: str) -> TargetMatrix:
    """Encode hard labels as one-hot rows or +-1 scalars."""
    if kind == "one_hot":
        values = np.zeros((ds.n, ds.num_classes))
        values[np.arange(ds.n), ds.hard_labels] = 1.0
        return TargetMatrix(values=values, kind="one_hot")
    if kind == "signed_binary":
        if ds.num_classes != 2:
            raise InvalidSpec("signed_binary encoding requires a binary task")
        values = (ds.hard_labels.astype(np.float64) * 2.0 - 1.0)[:, None]
        return TargetMatrix(values=values, kind="signed_binary")
    raise InvalidSpec(f"unknown target kind {kind!r}")


def random_targets(n: int, d: int, kind: str, seed: int) -> TargetMatrix:
    """Labels independent of any inputs: uniform +-1 or uniform class."""
    if n < 1:
        raise InvalidSpec("n must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "signed_binary":
        values = (rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0)[:, None]
    elif kind == "one_hot":
        labels = rng.integers(0, d, size=n)
        values = np.zeros((n, d))
        values[np.arange(n), labels] = 1.0
    else:
        raise InvalidSpec(f"unknown target kind {kind!r}")
    return TargetMatrix(values=values, kind="random")


def soft_binary_targets(logits: np.ndarray, tau: float) -> TargetMatrix:
    """Temperature-softened binary teacher predictions in [-1, 1]."""
    if tau <= 0:
        raise InvalidSpec("tau must be > 0")
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    values = (2.0 / (1.0 + np.exp(-z / tau)) - 1.0)[:, None]
    return TargetMatrix(values=values, kind="soft")


def to_csv(ds: LabeledDataset) -> str:
    """Serialize as `x0,...,x{p-1},label` rows with round-trip floats."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{j}" for j in range(ds.p)] + ["label"])
    for i in range(ds.n):
        writer.writerow([repr(float(v)) for v in ds.inputs[i]] + [int(ds.hard_labels[i])])
    return buf.getvalue()


def from_csv(text: str, num_classes: int | None = None,
             split_tag: str = "train", seed: int = 0) -> LabeledDataset:
    """Parse the CSV format written by to_csv."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if not header or header[-1] != "label":
        raise InvalidSpec("CSV header must end with 'label'")
    p = len(header) - 1
    xs, ys = [], []
    for row in reader:
        if not row:
            continue
        if len(row) != p + 1:
            raise InvalidSpec("CSV row width does not match header")
        xs.append([float(v) for v in row[:p]])
        ys.append(int(row[p]))
    labels = np.asarray(ys, dtype=np.int64)
    d = num_classes if num_classes is not None else int(labels.max()) + 1
    return LabeledDataset(
        inputs=np.asarray(xs), hard_labels=labels,
        num_classes=d, split_tag=split_tag, seed=seed,
    )
