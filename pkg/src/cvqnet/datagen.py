"""Synthetic 4-class / 8-feature classification dataset and linear baseline.

Generation recipe: 12 centroids (4 classes x 3 clusters) sit at distinct
random vertices of a hypercube, rescaled so the minimum inter-centroid
distance equals ``class_sep``; unit-variance Gaussian clouds around each
centroid; a seeded invertible mixing matrix correlates the features; a
small fraction of labels is reassigned at random; features are min-max
normalized per column; a seeded shuffle fixes the 700/300 split.

All randomness comes from numpy's PCG64 with one substream per purpose,
seeded as default_rng([seed, k]): k=0 centroids, k=1 cluster noise,
k=2 mixing, k=3 label flips, k=4 shuffle.  Output is bitwise
reproducible for a fixed seed.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ShapeError


@dataclass(frozen=True)
class GenSpec:
    n: int = 1000
    classes: int = 4
    features: int = 8
    clusters_per_class: int = 3
    class_sep: float = 3.0
    flip_fraction: float = 0.02
    seed: int = 7

    def __post_init__(self):
        if self.n % self.classes != 0:
            raise ShapeError("n must divide evenly between classes")
        if self.classes * self.clusters_per_class > 2**self.features:
            raise ShapeError("not enough hypercube vertices for the requested clusters")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_train: int = 700

    @property
    def train_features(self) -> np.ndarray:
        return self.features[: self.n_train]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[: self.n_train]

    @property
    def val_features(self) -> np.ndarray:
        return self.features[self.n_train:]

    @property
    def val_labels(self) -> np.ndarray:
        return self.labels[self.n_train:]


def _centroids(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    """Distinct hypercube vertices scaled to minimum separation class_sep."""
    total = spec.classes * spec.clusters_per_class
    picks = rng.choice(2**spec.features, size=total, replace=False)
    bits = (picks[:, None] >> np.arange(spec.features)[None, :]) & 1
    verts = (2.0 * bits - 1.0).astype(np.float64)
    diffs = verts[:, None, :] - verts[None, :, :]
    dists = np.sqrt(np.sum(diffs**2, axis=2))
    d_min = np.min(dists[np.triu_indices(total, k=1)])
    return verts * (spec.class_sep / d_min)


def _mixing_matrix(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    """Random invertible mixing with condition number at most 4."""
    q1, _ = np.linalg.qr(rng.standard_normal((spec.features, spec.features)))
    q2, _ = np.linalg.qr(rng.standard_normal((spec.features, spec.features)))
    sing = rng.uniform(0.5, 2.0, spec.features)
    return q1 @ np.diag(sing) @ q2.T


def generate(spec: GenSpec) -> Dataset:
    rng_cent = np.random.default_rng([spec.seed, 0])
    rng_noise = np.random.default_rng([spec.seed, 1])
    rng_mix = np.random.default_rng([spec.seed, 2])
    rng_flip = np.random.default_rng([spec.seed, 3])
    rng_shuffle = np.random.default_rng([spec.seed, 4])

    centroids = _centroids(spec, rng_cent)
    per_class = spec.n // spec.classes
    feats = np.empty((spec.n, spec.features))
    labels = np.empty(spec.n, dtype=np.int64)
    row = 0
    for cls in range(spec.classes):
        for j in range(per_class):
            cluster = cls * spec.clusters_per_class + (j % spec.clusters_per_class)
            feats[row] = centroids[cluster] + rng_noise.standard_normal(spec.features)
            labels[row] = cls
            row += 1

    mix = _mixing_matrix(spec, rng_mix)
    feats = feats @ mix.T

    n_flip = int(round(spec.flip_fraction * spec.n))
    if n_flip > 0:
        flip_idx = rng_flip.choice(spec.n, size=n_flip, replace=False)
        labels[flip_idx] = rng_flip.integers(0, spec.classes, size=n_flip)

    lo = feats.min(axis=0)
    hi = feats.max(axis=0)
    feats = (feats - lo) / (hi - lo)

    perm = rng_shuffle.permutation(spec.n)
    return Dataset(features=feats[perm], labels=labels[perm])


def save_dataset(path, dataset: Dataset) -> None:
    n_feat = dataset.features.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write("# schema: cvqnet/dataset/v1\n")
        fh.write(",".join(f"f{i}" for i in range(n_feat)) + ",label\n")
        for row, label in zip(dataset.features, dataset.labels):
            fh.write(",".join(repr(v) for v in row) + f",{label}\n")


def load_dataset(path) -> Dataset:
    feats, labels = [], []
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("f0"):
                continue
            parts = line.split(",")
            feats.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
    return Dataset(features=np.array(feats), labels=np.array(labels, dtype=np.int64))


def save_spec(path, spec: GenSpec) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(
            {
                "n": spec.n, "classes": spec.classes, "features": spec.features,
                "clusters_per_class": spec.clusters_per_class, "class_sep": spec.class_sep,
                "flip_fraction": spec.flip_fraction, "seed": spec.seed,
            },
            fh, sort_keys=True,
        )


def load_spec(path) -> GenSpec:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    try:
        return GenSpec(**doc)
    except TypeError as err:
        raise ShapeError(f"bad dataset spec field: {err}") from err


@dataclass
class BaselineFit:
    accuracy: float
    converged: bool
    weights: np.ndarray
    biases: np.ndarray


# One-vs-rest hinge loss, full-batch subgradient descent.  Deterministic:
# zero init, fixed schedule, fixed budget.
_BASELINE_ITERS = 3000
_BASELINE_L2 = 1e-3


def fit_linear_baseline(dataset: Dataset, return_fit: bool = False):
    """Validation accuracy of a linear max-margin classifier.

    This value is the well-trained threshold for sweep aggregation.
    """
    x, labels = dataset.train_features, dataset.train_labels
    classes = int(labels.max()) + 1
    n, d = x.shape
    w = np.zeros((classes, d))
    b = np.zeros(classes)
    best_obj = np.full(classes, np.inf)
    best_w, best_b = w.copy(), b.copy()
    converged = True
    for cls in range(classes):
        y = np.where(labels == cls, 1.0, -1.0)
        wc = np.zeros(d)
        bc = 0.0
        for t in range(_BASELINE_ITERS):
            margin = y * (x @ wc + bc)
            viol = margin < 1.0
            g_w = -(y[viol][:, None] * x[viol]).sum(axis=0) / n + _BASELINE_L2 * wc
            g_b = -y[viol].sum() / n
            lr = 0.5 / (1.0 + 0.01 * t)
            wc -= lr * g_w
            bc -= lr * g_b
            obj = np.mean(np.maximum(0.0, 1.0 - margin)) + 0.5 * _BASELINE_L2 * wc @ wc
            if obj < best_obj[cls]:
                best_obj[cls] = obj
                best_w[cls] = wc
                best_b[cls] = bc
        final_grad = np.sqrt(g_w @ g_w + g_b**2)
        if final_grad > 1e-2:
            converged = False
    scores = dataset.val_features @ best_w.T + best_b
    acc = float(np.mean(np.argmax(scores, axis=1) == dataset.val_labels))
    fit = BaselineFit(accuracy=acc, converged=converged, weights=best_w, biases=best_b)
    return fit if return_fit else acc


def class_regions(dataset: Dataset, feature_i: int, feature_j: int) -> dict:
    """Convex hull of each class's validation samples in one feature plane.

    Degenerate classes (one point, or collinear points) yield the short
    vertex list itself rather than a closed polygon.
    """
    n_feat = dataset.features.shape[1]
    for idx in (feature_i, feature_j):
        if not 0 <= idx < n_feat:
            raise ShapeError(f"feature index {idx} out of range")
    regions = {}
    for cls in np.unique(dataset.val_labels):
        pts = dataset.val_features[dataset.val_labels == cls][:, [feature_i, feature_j]]
        regions[int(cls)] = _convex_hull(pts)
    return regions


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull; returns vertices in counterclockwise order."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    return hull
