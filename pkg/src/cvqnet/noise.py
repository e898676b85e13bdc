"""Gaussian parameter noise and effective-number-of-bits (ENOB) sweeps.

A noisy analog weight with range [w_min, w_max] and noise standard
deviation sigma carries ENOB = log2(1 + (w_max - w_min) / sigma)
effective bits.  Sweeps perturb a trained network's parameters at a
target ENOB (per parameter group), re-evaluate validation accuracy over
several noise realizations, and report mean and standard deviation.

Parameter groups come in two partitions: by range kind (classical,
amplitude, phase) and by gate family (classical, displacement,
squeezing, kerr, interferometer).  A noise spec may not cover any
parameter twice.
"""

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .classical import ClassicalNetwork, param_tags, project_params
from .errors import ConfigurationError

KIND_GROUPS = ("classical", "amplitude", "phase")
FAMILY_GROUPS = ("classical", "displacement", "squeezing", "kerr", "interferometer")
ALL_GROUPS = ("classical", "amplitude", "phase", "displacement", "squeezing", "kerr", "interferometer")


@dataclass(frozen=True)
class ParameterRange:
    group: str
    w_min: float
    w_max: float

    @property
    def width(self) -> float:
        return self.w_max - self.w_min


def kind_ranges(a_max: float) -> dict:
    """Domain of each range kind: classical [-1,1], phase [0,2pi], amplitude [0,a_max]."""
    return {
        "classical": ParameterRange("classical", -1.0, 1.0),
        "phase": ParameterRange("phase", 0.0, 2.0 * math.pi),
        "amplitude": ParameterRange("amplitude", 0.0, a_max),
    }


def enob(prange: ParameterRange, sigma: float) -> float:
    """log2(1 + width / sigma); infinite for noiseless parameters."""
    if sigma < 0:
        raise ConfigurationError("sigma must be nonnegative")
    if sigma == 0:
        return math.inf
    return math.log2(1.0 + prange.width / sigma)


def sigma_for_enob(prange: ParameterRange, enob_target: float) -> float:
    """Invert the ENOB relation: sigma = width / (2^ENOB - 1)."""
    if enob_target <= 0:
        raise ConfigurationError("ENOB target must be positive")
    return prange.width / (2.0**enob_target - 1.0)


@dataclass
class NoiseSpec:
    """Per-group noise standard deviations; unlisted groups stay noiseless."""

    sigmas: dict = field(default_factory=dict)
    realizations: int = 10

    def __post_init__(self):
        for group in self.sigmas:
            if group not in ALL_GROUPS:
                raise ConfigurationError(f"unknown parameter group {group!r}")
        if self.realizations < 1:
            raise ConfigurationError("realizations must be at least 1")


def group_mask(network, group: str) -> np.ndarray:
    """Boolean mask over the flat parameter vector for one group."""
    if group not in ALL_GROUPS:
        raise ConfigurationError(f"unknown parameter group {group!r}")
    families, kinds = param_tags(network)
    if group in ("classical", "amplitude", "phase"):
        return kinds == group
    return families == group


def _sigma_vector(network, spec: NoiseSpec) -> np.ndarray:
    """Per-parameter sigma; rejects overlapping or absent groups."""
    n = network.total_params
    sigma = np.zeros(n)
    covered = np.zeros(n, dtype=bool)
    for group, s in spec.sigmas.items():
        if s < 0:
            raise ConfigurationError(f"negative sigma for group {group!r}")
        mask = group_mask(network, group)
        if not mask.any():
            raise ConfigurationError(f"group {group!r} has no parameters in this network")
        if (covered & mask).any():
            raise ConfigurationError(f"group {group!r} overlaps another noise group")
        covered |= mask
        sigma[mask] = s
    return sigma


def perturb(network, spec: NoiseSpec, seed) -> object:
    """Noisy copy: Gaussian noise per group, re-projected into each domain."""
    sigma = _sigma_vector(network, spec)
    rng = np.random.default_rng(seed)
    noisy = copy.deepcopy(network)
    vec = network.flat() + sigma * rng.standard_normal(sigma.size)
    _, kinds = param_tags(network)
    a_max = getattr(network, "a_max", 1.0)
    noisy.set_flat(project_params(vec, kinds, a_max))
    return noisy


def _present_kind_groups(network) -> list:
    _, kinds = param_tags(network)
    return [g for g in KIND_GROUPS if np.any(kinds == g)]


def _accuracy(network, x, labels) -> float:
    probs = engine.forward_probs(network, x)
    return float(np.mean(np.argmax(probs, axis=1) == labels))


@dataclass
class SweepPoint:
    group: str
    enob: float
    accuracies: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


def _sweep(network, dataset, enob_grid, groups, label: str, realizations: int, seed) -> list:
    x, labels = dataset.val_features, dataset.val_labels
    points = []
    for gi, b in enumerate(enob_grid):
        spec = _spec_at_enob(network, groups, b, realizations)
        accs = np.empty(realizations)
        for r in range(realizations):
            noisy = perturb(network, spec, [seed, gi, r])
            accs[r] = _accuracy(noisy, x, labels)
        points.append(SweepPoint(label, float(b), accs))
    return points


def _spec_at_enob(network, groups, enob_target: float, realizations: int) -> NoiseSpec:
    """Sigma per group from each parameter kind's range at a common ENOB."""
    a_max = getattr(network, "a_max", 1.0)
    ranges = kind_ranges(a_max)
    sigmas = {}
    for group in groups:
        if group in ranges:
            sigmas[group] = sigma_for_enob(ranges[group], enob_target)
        else:
            raise ConfigurationError(f"group {group!r} has no single range; use kind groups")
    return NoiseSpec(sigmas=sigmas, realizations=realizations)


def enob_sweep(network, dataset, enob_grid, realizations: int = 10, seed: int = 0) -> list:
    """Whole-network sweep: every parameter noisy at the common ENOB."""
    groups = _present_kind_groups(network)
    return _sweep(network, dataset, enob_grid, groups, "all", realizations, seed)


def per_gate_sweep(network, dataset, group: str, enob_grid,
                   realizations: int = 10, seed: int = 0) -> list:
    """Noise on a single gate family (or kind group); all others noiseless."""
    if isinstance(network, ClassicalNetwork) and group != "classical":
        raise ConfigurationError(f"classical networks have no {group!r} parameters")
    mask = group_mask(network, group)
    if not mask.any():
        raise ConfigurationError(f"group {group!r} has no parameters in this network")
    a_max = getattr(network, "a_max", 1.0)
    ranges = kind_ranges(a_max)
    _, kinds = param_tags(network)
    x, labels = dataset.val_features, dataset.val_labels
    points = []
    for gi, b in enumerate(enob_grid):
        accs = np.empty(realizations)
        for r in range(realizations):
            rng = np.random.default_rng([seed, gi, r])
            sigma = np.zeros(network.total_params)
            for kind, prange in ranges.items():
                kmask = mask & (kinds == kind)
                if kmask.any():
                    sigma[kmask] = sigma_for_enob(prange, b)
            noisy = copy.deepcopy(network)
            vec = network.flat() + sigma * rng.standard_normal(sigma.size)
            noisy.set_flat(project_params(vec, kinds, a_max))
            accs[r] = _accuracy(noisy, x, labels)
        points.append(SweepPoint(group, float(b), accs))
    return points


def near_ideal_enob(points: list, noiseless_accuracy: float, fraction: float = 0.9) -> float | None:
    """Smallest ENOB whose mean accuracy reaches fraction * noiseless.

    Linear interpolation between the bracketing grid points; None when
    the curve never reaches the target on the grid.
    """
    target = fraction * noiseless_accuracy
    pts = sorted(points, key=lambda p: p.enob)
    prev = None
    for p in pts:
        if p.mean >= target:
            if prev is None or p.mean == prev.mean:
                return p.enob
            frac = (target - prev.mean) / (p.mean - prev.mean)
            return prev.enob + frac * (p.enob - prev.enob)
        prev = p
    return None


def spearman_rank(points: list) -> float:
    """Rank correlation of mean accuracy vs ENOB across sweep points."""
    from scipy.stats import spearmanr

    pts = sorted(points, key=lambda p: p.enob)
    rho = spearmanr([p.enob for p in pts], [p.mean for p in pts]).statistic
    return float(rho)


def write_sweep_csv(path, points: list) -> None:
    with open(path, "w") as fh:
        fh.write("# schema: cvqnet/noise-sweep/v1\n")
        fh.write("group,enob,realization,accuracy\n")
        for p in points:
            for r, acc in enumerate(p.accuracies):
                fh.write(f"{p.group},{p.enob:.6f},{r},{acc:.6f}\n")


def write_aggregate_csv(path, points: list) -> None:
    with open(path, "w") as fh:
        fh.write("# schema: cvqnet/noise-aggregate/v1\n")
        fh.write("group,enob,mean,std\n")
        for p in points:
            fh.write(f"{p.group},{p.enob:.6f},{p.mean:.6f},{p.std:.6f}\n")
