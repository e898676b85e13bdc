"""Encoding layer and continuous-variable quantum network layer.

A layer applies, in order: interferometer U1 (triangular beamsplitter
mesh plus per-mode phase rotations), per-mode squeezers, interferometer
U2, per-mode displacements, and per-mode Kerr nonlinearities.  The
encoding stage prepares the input state by applying squeeze, displace,
Kerr per qumode to vacuum, with amplitudes bounded by a calibrated
a_max so the truncated state keeps most of its norm.
"""

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import fock
from .errors import CalibrationError, EncodingRangeError, ShapeError

TWO_PI = 2.0 * math.pi

# Values per qumode fed to the encoding stage, in slot order.
ENCODING_SLOTS = ("squeeze_amp", "squeeze_phase", "disp_amp", "disp_phase", "kerr")
AMPLITUDE_SLOTS = (0, 2)


@dataclass(frozen=True)
class NetworkShape:
    """Geometry of one network: inputs, qumodes, quantum layers, outputs, cutoff."""

    inputs: int
    modes: int
    layers: int
    outputs: int
    cutoff: int

    def __post_init__(self):
        for name in ("inputs", "modes", "outputs", "cutoff"):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be positive")
        if self.layers < 0:
            raise ShapeError("layers must be nonnegative")


@dataclass
class QuantumLayerParams:
    """Trainable parameters of a single quantum layer on M qumodes.

    theta1/theta2 hold the M(M-1)/2 beamsplitter angles of the two
    interferometers (beamsplitter phases fixed at zero), phi1/phi2 the M
    rotation phases.  Amplitudes live in [0, a_max], phases and kappa
    in [0, 2*pi).
    """

    theta1: np.ndarray
    phi1: np.ndarray
    r_amp: np.ndarray
    r_phase: np.ndarray
    theta2: np.ndarray
    phi2: np.ndarray
    d_amp: np.ndarray
    d_phase: np.ndarray
    kappa: np.ndarray

    FIELDS = ("theta1", "phi1", "r_amp", "r_phase", "theta2", "phi2", "d_amp", "d_phase", "kappa")

    def __post_init__(self):
        for name in self.FIELDS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(-1))
        m = self.phi1.size
        mesh = m * (m - 1) // 2
        sizes = {
            "theta1": mesh, "phi1": m, "r_amp": m, "r_phase": m,
            "theta2": mesh, "phi2": m, "d_amp": m, "d_phase": m, "kappa": m,
        }
        for name, want in sizes.items():
            got = getattr(self, name).size
            if got != want:
                raise ShapeError(f"{name} has {got} entries, expected {want} for {m} modes")

    @property
    def modes(self) -> int:
        return self.phi1.size

    @classmethod
    def zeros(cls, modes: int) -> "QuantumLayerParams":
        mesh = modes * (modes - 1) // 2
        return cls(*(np.zeros(n) for n in (mesh, modes, modes, modes, mesh, modes, modes, modes, modes)))

    @classmethod
    def random(cls, modes: int, a_max: float, rng: np.random.Generator) -> "QuantumLayerParams":
        """Amplitudes uniform on [0, a_max], angles uniform on [0, 2*pi)."""
        mesh = modes * (modes - 1) // 2
        return cls(
            theta1=rng.uniform(0.0, TWO_PI, mesh),
            phi1=rng.uniform(0.0, TWO_PI, modes),
            r_amp=rng.uniform(0.0, a_max, modes),
            r_phase=rng.uniform(0.0, TWO_PI, modes),
            theta2=rng.uniform(0.0, TWO_PI, mesh),
            phi2=rng.uniform(0.0, TWO_PI, modes),
            d_amp=rng.uniform(0.0, a_max, modes),
            d_phase=rng.uniform(0.0, TWO_PI, modes),
            kappa=rng.uniform(0.0, TWO_PI, modes),
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, name) for name in self.FIELDS])

    @classmethod
    def from_flat(cls, vec: np.ndarray, modes: int) -> "QuantumLayerParams":
        mesh = modes * (modes - 1) // 2
        sizes = (mesh, modes, modes, modes, mesh, modes, modes, modes, modes)
        if vec.size != sum(sizes):
            raise ShapeError(f"flat layer vector has {vec.size} entries, expected {sum(sizes)}")
        parts, start = [], 0
        for n in sizes:
            parts.append(np.array(vec[start:start + n]))
            start += n
        return cls(*parts)


def param_count(shape: NetworkShape) -> int:
    """Total trainable parameters of the hybrid network for this shape.

    Input layer 5M(I+1), each quantum layer M(M-1) + 7M, output layer O(M+1).
    """
    m = shape.modes
    return 5 * m * (shape.inputs + 1) + shape.layers * (m * (m - 1) + 7 * m) + shape.outputs * (m + 1)


def layer_param_count(modes: int) -> int:
    return modes * (modes - 1) + 7 * modes


def mesh_pairs(modes: int) -> list[tuple[int, int]]:
    """Fixed triangular beamsplitter order on adjacent mode pairs.

    Sweeps of shrinking length: (0,1)...(M-2,M-1), then (0,1)...(M-3,M-2),
    down to (0,1); M(M-1)/2 pairs in total.
    """
    pairs = []
    for sweep in range(modes - 1):
        for j in range(modes - 1 - sweep):
            pairs.append((j, j + 1))
    return pairs


def scale_encoding(raw: np.ndarray, a_max: float) -> np.ndarray:
    """Map raw per-qumode encoder outputs into gate domains.

    Amplitude slots go through a_max * sigmoid, phase and Kerr slots
    through 2*pi * sigmoid.  ``raw`` has length 5M, slot order per
    qumode: squeeze amp, squeeze phase, disp amp, disp phase, kerr.
    """
    if a_max <= 0:
        raise EncodingRangeError(f"a_max must be positive, got {a_max}")
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size % len(ENCODING_SLOTS) != 0:
        raise ShapeError(f"encoding input length {raw.size} is not a multiple of 5")
    sig = 1.0 / (1.0 + np.exp(-raw))
    scale = np.full(raw.size, TWO_PI)
    for slot in AMPLITUDE_SLOTS:
        scale[slot::5] = a_max
    return scale * sig


def encode(state: fock.FockState, scaled: np.ndarray, a_max: float | None = None) -> fock.FockState:
    """Apply the encoding gates S, D, Kerr per qumode to the vacuum state."""
    scaled = np.asarray(scaled, dtype=np.float64)
    if scaled.size != 5 * state.num_modes:
        raise ShapeError(f"expected {5 * state.num_modes} encoding values, got {scaled.size}")
    if a_max is not None:
        amps = np.concatenate([scaled[s::5] for s in AMPLITUDE_SLOTS])
        if np.any(amps < 0) or np.any(amps > a_max + 1e-12):
            raise EncodingRangeError("encoding amplitude outside [0, a_max]")
    d = state.cutoff
    out = state
    for m in range(state.num_modes):
        r, phi_r, a, phi_d, kap = scaled[5 * m: 5 * m + 5]
        out = fock.apply_one_mode(out, fock.squeezing_matrix(r, phi_r, d), m)
        out = fock.apply_one_mode(out, fock.displacement_matrix(a, phi_d, d), m)
        out = fock.apply_one_mode(out, fock.kerr_matrix(kap, d), m)
    return out


def interferometer(state: fock.FockState, thetas: np.ndarray, phis: np.ndarray) -> fock.FockState:
    """Triangular beamsplitter mesh followed by per-mode phase rotations."""
    m = state.num_modes
    thetas = np.asarray(thetas, dtype=np.float64).reshape(-1)
    phis = np.asarray(phis, dtype=np.float64).reshape(-1)
    pairs = mesh_pairs(m)
    if thetas.size != len(pairs):
        raise ShapeError(f"expected {len(pairs)} beamsplitter angles, got {thetas.size}")
    if phis.size != m:
        raise ShapeError(f"expected {m} rotation phases, got {phis.size}")
    out = state
    for theta, (p, q) in zip(thetas, pairs):
        out = fock.apply_two_mode(out, fock.beamsplitter_matrix(theta, 0.0, state.cutoff), p, q)
    for mode in range(m):
        out = fock.apply_one_mode(out, fock.rotation_matrix(phis[mode], state.cutoff), mode)
    return out


def quantum_layer(state: fock.FockState, params: QuantumLayerParams) -> fock.FockState:
    """One CV network layer: U1, squeezers, U2, displacements, Kerr gates."""
    if params.modes != state.num_modes:
        raise ShapeError(f"params are for {params.modes} modes, state has {state.num_modes}")
    d = state.cutoff
    out = interferometer(state, params.theta1, params.phi1)
    for m in range(state.num_modes):
        out = fock.apply_one_mode(out, fock.squeezing_matrix(params.r_amp[m], params.r_phase[m], d), m)
    out = interferometer(out, params.theta2, params.phi2)
    for m in range(state.num_modes):
        out = fock.apply_one_mode(out, fock.displacement_matrix(params.d_amp[m], params.d_phase[m], d), m)
    for m in range(state.num_modes):
        out = fock.apply_one_mode(out, fock.kerr_matrix(params.kappa[m], d), m)
    return out


def measure_all(state: fock.FockState) -> np.ndarray:
    """Homodyne position expectation of every mode."""
    return np.array([fock.homodyne_x_expectation(state, m) for m in range(state.num_modes)])


@dataclass(frozen=True)
class AmaxCalibration:
    """Largest encoding amplitude keeping single-mode encoded norm above the floor."""

    a_max: float
    cutoff: int
    norm_floor: float


# Probe grid: both amplitudes at the candidate value, phases on a coarse
# 8-point grid each.  Kerr is diagonal and norm-preserving, so it is not
# probed.  Finer grids are fine if persisted fixtures are regenerated.
CALIBRATION_STEP = 0.05
CALIBRATION_PHASE_POINTS = 8


def _worst_encoded_norm(a: float, cutoff: int) -> float:
    phases = np.linspace(0.0, TWO_PI, CALIBRATION_PHASE_POINTS, endpoint=False)
    vac = fock.FockState.vacuum(1, cutoff)
    worst = 1.0
    for phi_r in phases:
        after_s = fock.apply_one_mode(vac, fock.squeezing_matrix(a, phi_r, cutoff), 0)
        for phi_d in phases:
            out = fock.apply_one_mode(after_s, fock.displacement_matrix(a, phi_d, cutoff), 0)
            worst = min(worst, fock.state_norm_sq(out))
    return worst


def calibrate_amax(cutoff: int, norm_floor: float, max_candidates: int = 200) -> AmaxCalibration:
    """Scan candidate amplitudes upward and keep the largest that passes.

    A candidate a passes when the worst probe-grid norm of the encoded
    single-mode state stays at or above ``norm_floor``.
    """
    if not 0.0 < norm_floor < 1.0:
        raise CalibrationError(f"norm_floor must lie in (0, 1), got {norm_floor}")
    best = None
    for k in range(1, max_candidates + 1):
        a = k * CALIBRATION_STEP
        if _worst_encoded_norm(a, cutoff) >= norm_floor:
            best = a
        else:
            break
    if best is None:
        raise CalibrationError(
            f"no amplitude on the {CALIBRATION_STEP} grid keeps norm >= {norm_floor} at cutoff {cutoff}"
        )
    return AmaxCalibration(a_max=best, cutoff=cutoff, norm_floor=norm_floor)


DEFAULT_NORM_FLOOR = 0.99
_AMAX_TABLE = "amax_table.txt"


def write_amax_table(path, cutoffs=range(5, 12), norm_floor: float = DEFAULT_NORM_FLOOR) -> dict[int, float]:
    """Regenerate the persisted cutoff -> a_max table."""
    table = {d: calibrate_amax(d, norm_floor).a_max for d in cutoffs}
    with open(path, "w") as fh:
        fh.write(f"# a_max calibration table, norm_floor={norm_floor}\n")
        fh.write("# cutoff a_max\n")
        for d, a in sorted(table.items()):
            fh.write(f"{d} {a:.6f}\n")
    return table


def load_amax_table(path=None) -> dict[int, float]:
    if path is None:
        src = resources.files("cvqnet").joinpath("data", _AMAX_TABLE)
        text = src.read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    table = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        d, a = line.split()
        table[int(d)] = float(a)
    return table


def default_amax(cutoff: int) -> float:
    """a_max from the shipped calibration table (norm floor 0.99)."""
    table = load_amax_table()
    if cutoff not in table:
        return calibrate_amax(cutoff, DEFAULT_NORM_FLOOR).a_max
    return table[cutoff]
