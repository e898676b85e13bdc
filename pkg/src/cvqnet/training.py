"""Loss, optimizer, gradient checks, and the shared training loop.

Both network kinds train the same way: seeded mini-batch shuffles, Adam
with learning rate 0.001 and batch size 32, categorical cross entropy,
and after every step a projection of each parameter back into its
domain (classical weights clipped to [-1, 1], quantum amplitudes
clamped to [0, a_max], phases wrapped mod 2*pi).  With the 700-sample
training split this gives 22 updates per epoch.  A fixed seed and
config reproduce the parameter trajectory bitwise.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .classical import ClassicalNetwork, HybridNetwork, param_tags, project_params
from .errors import NumericalError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 200
    l1_weight: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.l1_weight < 0:
            raise ValueError("l1_weight must be nonnegative")


def cross_entropy_loss(probs: np.ndarray, onehot: np.ndarray) -> float:
    """-sum(y log(p + eps)) with eps = 1e-12, averaged over rows if batched."""
    probs = np.asarray(probs, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    per = -np.sum(onehot * np.log(probs + 1e-12), axis=-1)
    return float(np.mean(per))


def l1_amplitude_penalty(network, weight: float) -> float:
    """weight * sum |amplitude| over layer squeeze/displacement amplitudes."""
    if isinstance(network, ClassicalNetwork):
        return 0.0
    total = 0.0
    for q in network.quantum_layers:
        total += np.sum(np.abs(q.r_amp)) + np.sum(np.abs(q.d_amp))
    return weight * float(total)


def batch_loss(network, x: np.ndarray, labels: np.ndarray, l1_weight: float) -> float:
    probs = engine.forward_probs(network, x)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1.0
    return cross_entropy_loss(probs, onehot) + l1_amplitude_penalty(network, l1_weight)


def gradient(network, x: np.ndarray, labels: np.ndarray, l1_weight: float) -> np.ndarray:
    """Flat gradient of mean batch loss plus penalty; reverse-mode adjoint."""
    if len(labels) == 0:
        raise ValueError("gradient needs a nonempty batch")
    loss, grad = engine.loss_and_grad(network, x, labels, l1_weight)
    if not math.isfinite(loss):
        raise NumericalError(f"loss is non-finite ({loss})")
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericalError(f"gradient is non-finite at parameter index {bad}")
    return grad


def finite_diff_gradient(network, x: np.ndarray, labels: np.ndarray,
                         l1_weight: float, step: float = 1e-4) -> np.ndarray:
    """Central differences through the full loss; the independent oracle."""
    base = network.flat()
    grad = np.zeros_like(base)
    try:
        for i in range(base.size):
            for sign, slot in ((1.0, 0), (-1.0, 1)):
                vec = base.copy()
                vec[i] += sign * step
                network.set_flat(vec)
                if slot == 0:
                    up = batch_loss(network, x, labels, l1_weight)
                else:
                    down = batch_loss(network, x, labels, l1_weight)
            grad[i] = (up - down) / (2.0 * step)
    finally:
        network.set_flat(base)
    return grad


@dataclass
class GradientReport:
    index: int
    analytic: float
    finite_diff: float

    @property
    def relative_error(self) -> float:
        return abs(self.analytic - self.finite_diff) / max(abs(self.finite_diff), 1e-8)


def gradient_check(network, x: np.ndarray, labels: np.ndarray,
                   l1_weight: float = 0.0, step: float = 1e-4):
    """Per-coordinate comparison of the adjoint gradient to central differences."""
    analytic = gradient(network, x, labels, l1_weight)
    fd = finite_diff_gradient(network, x, labels, l1_weight, step)
    return [GradientReport(i, float(a), float(f)) for i, (a, f) in enumerate(zip(analytic, fd))]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              learning_rate: float, kinds: np.ndarray, a_max: float) -> np.ndarray:
    """One Adam update followed by domain projection; mutates ``state``."""
    state.t += 1
    state.m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grads
    state.v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grads**2
    m_hat = state.m / (1.0 - ADAM_BETA1**state.t)
    v_hat = state.v / (1.0 - ADAM_BETA2**state.t)
    out = params - learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return project_params(out, kinds, a_max)


def accuracy(network, x: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax predictions equal to the label; ties pick the lowest class."""
    if len(labels) == 0:
        raise ValueError("accuracy needs a nonempty sample set")
    probs = engine.forward_probs(network, np.asarray(x, dtype=np.float64))
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


@dataclass
class TrainResult:
    final_params: np.ndarray
    best_params: np.ndarray
    best_epoch: int
    best_val_accuracy: float
    history: list = field(default_factory=list)  # (epoch, train_acc, val_acc)
    updates_per_epoch: int = 0


def train(network, dataset, config: TrainConfig) -> TrainResult:
    """Train in place; the network ends at the final epoch's parameters."""
    x_train, y_train = dataset.train_features, dataset.train_labels
    x_val, y_val = dataset.val_features, dataset.val_labels
    n = len(y_train)
    updates = -(-n // config.batch_size)

    a_max = getattr(network, "a_max", 1.0)
    _, kinds = param_tags(network)
    params = network.flat()
    state = AdamState.zeros(params.size)
    shuffle_rng = np.random.default_rng([config.seed, 1])

    best_params = params.copy()
    best_val = -1.0
    best_epoch = 0
    history = []
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        for b in range(updates):
            idx = perm[b * config.batch_size:(b + 1) * config.batch_size]
            try:
                grads = gradient(network, x_train[idx], y_train[idx], config.l1_weight)
            except NumericalError as err:
                raise NumericalError(f"epoch {epoch}, batch {b}: {err}") from err
            params = adam_step(params, grads, state, config.learning_rate, kinds, a_max)
            network.set_flat(params)
        train_acc = accuracy(network, x_train, y_train)
        val_acc = accuracy(network, x_val, y_val)
        history.append((epoch, train_acc, val_acc))
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_params = params.copy()
    return TrainResult(
        final_params=params,
        best_params=best_params,
        best_epoch=best_epoch,
        best_val_accuracy=best_val,
        history=history,
        updates_per_epoch=updates,
    )


def save_checkpoint(path, network, result: TrainResult | None = None,
                    adam_state: AdamState | None = None) -> None:
    from .classical import _shape_doc

    doc = {
        "kind": "classical" if isinstance(network, ClassicalNetwork) else "hybrid",
        "shape": _shape_doc(network.shape),
        "params": network.flat().tolist(),
    }
    if isinstance(network, ClassicalNetwork):
        doc["widths"] = network.widths
    else:
        doc["a_max"] = network.a_max
    if result is not None:
        doc["best_params"] = result.best_params.tolist()
        doc["best_epoch"] = result.best_epoch
        doc["best_val_accuracy"] = result.best_val_accuracy
    if adam_state is not None:
        doc["adam"] = {"m": adam_state.m.tolist(), "v": adam_state.v.tolist(), "t": adam_state.t}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path, best: bool = True):
    """Rebuild the network from a checkpoint; ``best`` selects the best-epoch params."""
    from . import classical
    from .cvqnn import NetworkShape, QuantumLayerParams

    with open(path) as fh:
        doc = json.load(fh)
    shape = NetworkShape(**doc["shape"])
    if doc["kind"] == "classical":
        net = classical.build_classical_twin(shape)
    else:
        net = classical.HybridNetwork.init(shape, doc["a_max"], np.random.default_rng(0))
    vec = doc.get("best_params") if best and "best_params" in doc else doc["params"]
    net.set_flat(np.array(vec, dtype=np.float64))
    return net


def write_history_csv(path, history) -> None:
    with open(path, "w") as fh:
        fh.write("# schema: cvqnet/history/v1\n")
        fh.write("epoch,train_acc,val_acc\n")
        for epoch, train_acc, val_acc in history:
            fh.write(f"{epoch},{train_acc:.6f},{val_acc:.6f}\n")
