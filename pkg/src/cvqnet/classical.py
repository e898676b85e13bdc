"""Dense classical layers, the hybrid network container, and twin construction.

Classical weights and biases are clipped to [-1, 1], mirroring the
transmission range of balanced photodetection.  The classical twin of a
hybrid network matches it layer by layer: the input layer is I -> 5M
(identical parameter count), each quantum layer becomes one hidden dense
layer whose parameter count is closest in ratio to the quantum layer's
M(M-1) + 7M, and the output layer maps the last width to O.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import cvqnn, fock
from .cvqnn import NetworkShape, QuantumLayerParams
from .errors import ShapeError

ACTIVATIONS = ("none", "relu", "softmax")

# Flat-parameter tags: family drives per-gate noise groups, kind drives
# domains (clipping / wrapping) and range-based noise groups.
FAMILY_CLASSICAL = "classical"
FAMILY_INTERFEROMETER = "interferometer"
FAMILY_SQUEEZING = "squeezing"
FAMILY_DISPLACEMENT = "displacement"
FAMILY_KERR = "kerr"

KIND_CLASSICAL = "classical"
KIND_AMPLITUDE = "amplitude"
KIND_PHASE = "phase"

_LAYER_FIELD_TAGS = {
    "theta1": (FAMILY_INTERFEROMETER, KIND_PHASE),
    "phi1": (FAMILY_INTERFEROMETER, KIND_PHASE),
    "r_amp": (FAMILY_SQUEEZING, KIND_AMPLITUDE),
    "r_phase": (FAMILY_SQUEEZING, KIND_PHASE),
    "theta2": (FAMILY_INTERFEROMETER, KIND_PHASE),
    "phi2": (FAMILY_INTERFEROMETER, KIND_PHASE),
    "d_amp": (FAMILY_DISPLACEMENT, KIND_AMPLITUDE),
    "d_phase": (FAMILY_DISPLACEMENT, KIND_PHASE),
    "kappa": (FAMILY_KERR, KIND_PHASE),
}


@dataclass
class DenseLayer:
    in_dim: int
    out_dim: int
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "none"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.shape != (self.out_dim, self.in_dim):
            raise ShapeError(f"weights shape {self.weights.shape} != ({self.out_dim}, {self.in_dim})")
        if self.bias.size != self.out_dim:
            raise ShapeError(f"bias length {self.bias.size} != {self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")

    @property
    def param_count(self) -> int:
        return self.out_dim * (self.in_dim + 1)

    @classmethod
    def init(cls, in_dim: int, out_dim: int, activation: str, rng: np.random.Generator) -> "DenseLayer":
        # Uniform [-s, s] with s capped at the clip boundary.
        s = min(1.0, math.sqrt(6.0 / (in_dim + out_dim)))
        w = rng.uniform(-s, s, (out_dim, in_dim))
        b = rng.uniform(-s, s, out_dim)
        return cls(in_dim, out_dim, w, b, activation)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ShapeError(f"input length {x.shape[-1]} != layer in_dim {layer.in_dim}")
    z = x @ layer.weights.T + layer.bias
    if layer.activation == "relu":
        return np.maximum(z, 0.0)
    if layer.activation == "softmax":
        return softmax(z)
    return z


def clip_weights(layer: DenseLayer) -> DenseLayer:
    """Clamp every weight and bias entry to [-1, 1]; pure, idempotent."""
    return DenseLayer(
        layer.in_dim,
        layer.out_dim,
        np.clip(layer.weights, -1.0, 1.0),
        np.clip(layer.bias, -1.0, 1.0),
        layer.activation,
    )


@dataclass
class ClassicalNetwork:
    layers: list
    shape: NetworkShape | None = None

    @property
    def widths(self) -> list:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def total_params(self) -> int:
        return sum(layer.param_count for layer in self.layers)

    def flat(self) -> np.ndarray:
        parts = []
        for layer in self.layers:
            parts.append(layer.weights.reshape(-1))
            parts.append(layer.bias)
        return np.concatenate(parts)

    def set_flat(self, vec: np.ndarray) -> None:
        start = 0
        for layer in self.layers:
            n = layer.out_dim * layer.in_dim
            layer.weights = vec[start:start + n].reshape(layer.out_dim, layer.in_dim).copy()
            start += n
            layer.bias = vec[start:start + layer.out_dim].copy()
            start += layer.out_dim
        if start != vec.size:
            raise ShapeError(f"flat vector has {vec.size} entries, network needs {start}")


def twin_hidden_width(prev: int, modes: int) -> int:
    """Dense width whose parameter count best matches one quantum layer.

    Matches (prev+1)*w against M(M-1) + 7M in ratio (log distance); ties
    go to the larger width.  Ratio matching keeps the published
    two-neuron hidden layer for the 2-qumode exemplar.
    """
    target = cvqnn.layer_param_count(modes)
    best_w, best_d = 1, float("inf")
    w_hi = max(1, -(-2 * target // (prev + 1)))
    for w in range(1, w_hi + 1):
        d = abs(math.log((prev + 1) * w / target))
        if d < best_d - 1e-12 or (abs(d - best_d) <= 1e-12 and w > best_w):
            best_w, best_d = w, d
    return best_w


def build_classical_twin(shape: NetworkShape, rng: np.random.Generator | None = None) -> ClassicalNetwork:
    """Fully classical network that matches the hybrid layer by layer."""
    if rng is None:
        rng = np.random.default_rng(0)
    widths = [shape.inputs, 5 * shape.modes]
    for _ in range(shape.layers):
        widths.append(twin_hidden_width(widths[-1], shape.modes))
    widths.append(shape.outputs)
    layers = []
    for i in range(len(widths) - 1):
        act = "softmax" if i == len(widths) - 2 else "relu"
        layers.append(clip_weights(DenseLayer.init(widths[i], widths[i + 1], act, rng)))
    return ClassicalNetwork(layers, shape)


@dataclass
class HybridNetwork:
    """Classical input layer, encoding scaler, quantum layers, softmax output."""

    shape: NetworkShape
    a_max: float
    input_layer: DenseLayer
    quantum_layers: list
    output_layer: DenseLayer

    @classmethod
    def init(cls, shape: NetworkShape, a_max: float, rng: np.random.Generator) -> "HybridNetwork":
        input_layer = clip_weights(DenseLayer.init(shape.inputs, 5 * shape.modes, "none", rng))
        qlayers = [QuantumLayerParams.random(shape.modes, a_max, rng) for _ in range(shape.layers)]
        output_layer = clip_weights(DenseLayer.init(shape.modes, shape.outputs, "softmax", rng))
        return cls(shape, a_max, input_layer, qlayers, output_layer)

    @property
    def total_params(self) -> int:
        return cvqnn.param_count(self.shape)

    def flat(self) -> np.ndarray:
        parts = [self.input_layer.weights.reshape(-1), self.input_layer.bias]
        parts += [q.flat() for q in self.quantum_layers]
        parts += [self.output_layer.weights.reshape(-1), self.output_layer.bias]
        vec = np.concatenate(parts)
        if vec.size != self.total_params:
            raise ShapeError(f"flat vector has {vec.size} entries, expected {self.total_params}")
        return vec

    def set_flat(self, vec: np.ndarray) -> None:
        if vec.size != self.total_params:
            raise ShapeError(f"flat vector has {vec.size} entries, expected {self.total_params}")
        m, i, o = self.shape.modes, self.shape.inputs, self.shape.outputs
        start = 0
        n = 5 * m * i
        self.input_layer.weights = vec[start:start + n].reshape(5 * m, i).copy()
        start += n
        self.input_layer.bias = vec[start:start + 5 * m].copy()
        start += 5 * m
        per_layer = cvqnn.layer_param_count(m)
        for k in range(self.shape.layers):
            self.quantum_layers[k] = QuantumLayerParams.from_flat(vec[start:start + per_layer], m)
            start += per_layer
        n = o * m
        self.output_layer.weights = vec[start:start + n].reshape(o, m).copy()
        start += n
        self.output_layer.bias = vec[start:start + o].copy()


def param_tags(network) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate (family, kind) tags for a network's flat vector."""
    if isinstance(network, ClassicalNetwork):
        n = network.total_params
        fam = np.full(n, FAMILY_CLASSICAL, dtype=object)
        return fam, fam.copy()
    families, kinds = [], []
    nin = network.input_layer.param_count
    families += [FAMILY_CLASSICAL] * nin
    kinds += [KIND_CLASSICAL] * nin
    m = network.shape.modes
    for _ in range(network.shape.layers):
        for name in QuantumLayerParams.FIELDS:
            size = m * (m - 1) // 2 if name in ("theta1", "theta2") else m
            fam, kind = _LAYER_FIELD_TAGS[name]
            families += [fam] * size
            kinds += [kind] * size
    nout = network.output_layer.param_count
    families += [FAMILY_CLASSICAL] * nout
    kinds += [KIND_CLASSICAL] * nout
    return np.array(families, dtype=object), np.array(kinds, dtype=object)


def project_params(vec: np.ndarray, kinds: np.ndarray, a_max: float) -> np.ndarray:
    """Send each coordinate back into its domain.

    Classical values clip to [-1, 1]; amplitudes clamp to [0, a_max];
    phases wrap modulo 2*pi.
    """
    out = np.array(vec, dtype=np.float64)
    cls_mask = kinds == KIND_CLASSICAL
    amp_mask = kinds == KIND_AMPLITUDE
    phase_mask = kinds == KIND_PHASE
    out[cls_mask] = np.clip(out[cls_mask], -1.0, 1.0)
    out[amp_mask] = np.clip(out[amp_mask], 0.0, a_max)
    out[phase_mask] = np.mod(out[phase_mask], 2.0 * math.pi)
    return out


def forward(network, features: np.ndarray) -> np.ndarray:
    """Class probabilities for one sample; reference (unbatched) path."""
    x = np.asarray(features, dtype=np.float64)
    if isinstance(network, ClassicalNetwork):
        for layer in network.layers:
            x = dense_forward(layer, x)
        return x
    if x.shape[-1] != network.shape.inputs:
        raise ShapeError(f"feature length {x.shape[-1]} != {network.shape.inputs}")
    raw = dense_forward(network.input_layer, x)
    scaled = cvqnn.scale_encoding(raw, network.a_max)
    state = cvqnn.encode(fock.FockState.vacuum(network.shape.modes, network.shape.cutoff), scaled)
    for q in network.quantum_layers:
        state = cvqnn.quantum_layer(state, q)
    measured = cvqnn.measure_all(state)
    return dense_forward(network.output_layer, measured)


def save_network(path, network) -> None:
    """Flat-vector file with a shape header; JSON keeps floats exact."""
    if isinstance(network, ClassicalNetwork):
        doc = {
            "kind": "classical",
            "widths": network.widths,
            "shape": _shape_doc(network.shape),
            "params": network.flat().tolist(),
        }
    else:
        doc = {
            "kind": "hybrid",
            "shape": _shape_doc(network.shape),
            "a_max": network.a_max,
            "params": network.flat().tolist(),
        }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_network(path):
    with open(path) as fh:
        doc = json.load(fh)
    shape = NetworkShape(**doc["shape"]) if doc.get("shape") else None
    vec = np.array(doc["params"], dtype=np.float64)
    if doc["kind"] == "classical":
        widths = doc["widths"]
        layers = []
        for i in range(len(widths) - 1):
            act = "softmax" if i == len(widths) - 2 else "relu"
            layers.append(DenseLayer(widths[i], widths[i + 1],
                                     np.zeros((widths[i + 1], widths[i])), np.zeros(widths[i + 1]), act))
        net = ClassicalNetwork(layers, shape)
        net.set_flat(vec)
        return net
    net = HybridNetwork.init(shape, doc["a_max"], np.random.default_rng(0))
    net.set_flat(vec)
    return net


def _shape_doc(shape: NetworkShape | None):
    if shape is None:
        return None
    return {
        "inputs": shape.inputs, "modes": shape.modes, "layers": shape.layers,
        "outputs": shape.outputs, "cutoff": shape.cutoff,
    }
