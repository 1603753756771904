"""Synthetic Gaussian datasets, CSV ingestion, and the class-incremental
split planner producing the base stream and the per-session few-shot streams.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, InputError, ParseError
from .numcore import Rng, Tensor2D, as_tensor2d, ensure_finite

PROFILES = {
    "cifar-like": dict(K=60, n=5, k=5, S=8),
    "cub-like": dict(K=100, n=10, k=5, S=10),
    "mini-like": dict(K=60, n=5, k=5, S=8),
}


@dataclass(frozen=True)
class SessionPlan:
    """Incremental schedule: K base classes, n classes x k shots per novel
    session, S novel sessions. seed pins the data stream."""

    K: int
    n: int
    k: int
    S: int
    seed: int = 0

    def __post_init__(self):
        for name in ("K", "n", "k", "S"):
            if getattr(self, name) < 1:
                raise ConfigError(f"plan field {name} must be at least 1")

    @property
    def total_classes(self) -> int:
        return self.K + self.n * self.S

    def class_range(self, i: int) -> range:
        """Class indices owned by session i (0 = base)."""
        self.check_session(i)
        if i == 0:
            return range(0, self.K)
        return range(self.K + (i - 1) * self.n, self.K + i * self.n)

    def check_session(self, i: int):
        if not 0 <= i <= self.S:
            raise InputError(f"session index {i} outside [0, {self.S}]")


def make_plan(profile: str, *, K=None, n=None, k=None, S=None, seed: int = 0) -> SessionPlan:
    """Build a plan from a named profile, or from explicit counts ('custom')."""
    if profile == "custom":
        if None in (K, n, k, S):
            raise ConfigError("custom plans must supply K, n, k, and S")
        return SessionPlan(int(K), int(n), int(k), int(S), int(seed))
    if profile not in PROFILES:
        raise ConfigError(f"unknown plan profile {profile!r}")
    base = dict(PROFILES[profile])
    for name, value in (("K", K), ("n", n), ("k", k), ("S", S)):
        if value is not None:
            base[name] = int(value)
    return SessionPlan(seed=int(seed), **base)


@dataclass(frozen=True)
class SyntheticSpec:
    """Class-conditional Gaussian generator: means sampled uniformly on a
    sphere of radius mean_radius, isotropic noise noise_sigma."""

    input_dim: int = 32
    mean_radius: float = 6.0
    noise_sigma: float = 1.0
    train_per_class: int = 100
    test_per_class: int = 50

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError("input_dim must be at least 1")
        if self.noise_sigma <= 0:
            raise ConfigError("noise_sigma must be positive")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ConfigError("per-class sample counts must be at least 1")


class Dataset:
    """Immutable (inputs, labels) pair with a train/test role."""

    def __init__(self, inputs: Tensor2D, labels, role: str):
        self.inputs = ensure_finite(as_tensor2d(inputs), "dataset inputs")
        self.labels = np.ascontiguousarray(labels, dtype=np.int64)
        if self.labels.shape != (self.inputs.shape[0],):
            raise InputError("labels length must match the input row count")
        if role not in ("train", "test"):
            raise InputError(f"unknown dataset role {role!r}")
        self.role = role
        self.inputs.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(self.inputs[mask], self.labels[mask], self.role)


@dataclass(frozen=True)
class FullData:
    """Train and test splits covering every class of a plan."""

    train: Dataset
    test: Dataset

    @property
    def input_dim(self) -> int:
        return self.train.input_dim


def sample_class_means(spec: SyntheticSpec, num_classes: int, rng: Rng) -> Tensor2D:
    """num_classes points drawn uniformly on the sphere of radius mean_radius."""
    raw = rng.normal(num_classes, spec.input_dim)
    norms = np.sqrt(np.sum(raw * raw, axis=1, keepdims=True))
    return spec.mean_radius * raw / norms


def generate_synthetic(spec: SyntheticSpec, plan: SessionPlan, rng: Rng) -> FullData:
    """Full train/test datasets for all K + nS classes, class-major order.

    Each sample is its class mean plus noise_sigma * standard normal noise.
    Samples for a class are contiguous and in generation order, which is what
    the few-shot selection of session_stream keys off.
    """
    c = plan.total_classes
    means = sample_class_means(spec, c, rng.split(1))

    def _draw(per_class: int, stream: Rng, role: str) -> Dataset:
        noise = stream.normal(c * per_class, spec.input_dim, spec.noise_sigma)
        inputs = np.repeat(means, per_class, axis=0) + noise
        labels = np.repeat(np.arange(c), per_class)
        return Dataset(inputs, labels, role)

    return FullData(
        train=_draw(spec.train_per_class, rng.split(2), "train"),
        test=_draw(spec.test_per_class, rng.split(3), "test"),
    )


def session_stream(full: FullData, plan: SessionPlan, i: int) -> Dataset:
    """Training data visible in session i.

    Session 0 yields every train sample of the K base classes; session i >= 1
    yields exactly k shots per class, the first k in generation order.
    """
    plan.check_session(i)
    classes = plan.class_range(i)
    if i == 0:
        mask = np.isin(full.train.labels, np.asarray(classes))
        return full.train.subset(mask)
    keep = np.zeros(len(full.train), dtype=bool)
    for cls in classes:
        idx = np.flatnonzero(full.train.labels == cls)
        if idx.size < plan.k:
            raise InputError(
                f"class {cls} has {idx.size} train samples, fewer than k={plan.k}"
            )
        keep[idx[: plan.k]] = True
    return full.train.subset(keep)


def eval_split(full: FullData, plan: SessionPlan, i: int) -> tuple[Dataset, Dataset]:
    """(base test set, novel test set over classes seen up to session i)."""
    plan.check_session(i)
    labels = full.test.labels
    base = full.test.subset(labels < plan.K)
    hi = plan.K + plan.n * i
    novel = full.test.subset((labels >= plan.K) & (labels < hi))
    return base, novel


CSV_LABEL_COLUMN = "label"


def save_flatfile(dataset: Dataset, path: str):
    """Write `label,f1,...,fm` CSV; floats use repr so the round trip is exact."""
    cols = dataset.input_dim
    header = ",".join([CSV_LABEL_COLUMN] + [f"f{j + 1}" for j in range(cols)])
    lines = [header]
    for label, row in zip(dataset.labels, dataset.inputs):
        lines.append(",".join([str(int(label))] + [repr(float(v)) for v in row]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_flatfile(path: str, role: str = "train") -> Dataset:
    """Parse a `label,f1,...,fm` CSV into a Dataset.

    Malformed rows raise ParseError naming the 1-based line; a row whose
    width disagrees with the header raises FormatError.
    """
    if not os.path.exists(path):
        raise ParseError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip() != ""]
    if not lines:
        raise ParseError(f"{path}: empty file, expected a header row")
    header = lines[0].split(",")
    if header[0] != CSV_LABEL_COLUMN or len(header) < 2:
        raise FormatError(f"{path}: header must start with '{CSV_LABEL_COLUMN}' and name at least one feature")
    width = len(header) - 1
    labels = []
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != width + 1:
            raise FormatError(
                f"{path}:{lineno}: expected {width + 1} fields, got {len(parts)}"
            )
        try:
            labels.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return Dataset(np.array(rows, dtype=np.float64).reshape(len(rows), width), labels, role)
