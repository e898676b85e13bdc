"""Truncated Fock-basis states and continuous-variable gate matrices.

States live in the photon-number basis {|0>, ..., |D-1>} per mode; a
multi-mode state is a complex array of length D**M indexed row-major by
the photon-number multi-index (n_1, ..., n_M).  Gates are dense matrix
exponentials of their generators.  Quadrature convention: hbar = 2 and
x = a + a^dag, so the vacuum position variance is 1.

Gates at finite cutoff are sub-unitary (truncation removes probability
mass); rotation and Kerr gates are diagonal and stay exactly unitary.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateStateError, InvalidCutoffError, InvalidModesError, ShapeError

HBAR = 2.0

ONE_MODE = "one-mode"
TWO_MODE = "two-mode"


@dataclass(frozen=True)
class FockState:
    """Pure state of ``num_modes`` qumodes truncated at ``cutoff`` levels."""

    num_modes: int
    cutoff: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.cutoff < 2:
            raise InvalidCutoffError(f"cutoff must be >= 2, got {self.cutoff}")
        if self.num_modes < 1:
            raise InvalidModesError(f"num_modes must be >= 1, got {self.num_modes}")
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        expected = self.cutoff**self.num_modes
        if amps.size != expected:
            raise ShapeError(f"amplitude array has length {amps.size}, expected {expected}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def vacuum(cls, num_modes: int, cutoff: int) -> "FockState":
        amps = np.zeros(cutoff**num_modes, dtype=np.complex128)
        amps[0] = 1.0
        return cls(num_modes, cutoff, amps)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per mode."""
        return self.amplitudes.reshape((self.cutoff,) * self.num_modes)


@dataclass(frozen=True)
class GateMatrix:
    """Dense gate acting on one mode (dim D) or an ordered mode pair (dim D^2)."""

    dim: int
    entries: np.ndarray
    arity: str

    def __post_init__(self):
        ent = np.asarray(self.entries, dtype=np.complex128)
        if ent.shape != (self.dim, self.dim):
            raise ShapeError(f"gate entries have shape {ent.shape}, expected ({self.dim}, {self.dim})")
        if self.arity not in (ONE_MODE, TWO_MODE):
            raise ShapeError(f"unknown gate arity {self.arity!r}")
        object.__setattr__(self, "entries", ent)


def _check_cutoff(cutoff: int) -> None:
    if cutoff < 2:
        raise InvalidCutoffError(f"cutoff must be >= 2, got {cutoff}")


def ladder_matrices(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Annihilation and creation matrices at the given cutoff.

    a[n-1, n] = sqrt(n); the creation matrix is the conjugate transpose.
    """
    _check_cutoff(cutoff)
    a = np.diag(np.sqrt(np.arange(1, cutoff, dtype=np.float64)), k=1).astype(np.complex128)
    return a, a.conj().T


def position_matrix(cutoff: int) -> np.ndarray:
    """x = a + a^dag under the hbar = 2 convention."""
    a, adag = ladder_matrices(cutoff)
    return a + adag


def _cropped_exp(generator_at, cutoff: int, guess: int) -> np.ndarray:
    """Top-left cutoff x cutoff block of the infinite-dimensional exponential.

    Exponentiating the generator truncated at the cutoff itself would be
    exactly unitary (the generator stays anti-Hermitian), hiding the
    probability mass that really leaks past the cutoff.  Instead the
    exponential is evaluated at a guard dimension, doubled until the
    retained block is stable to 1e-13, then cropped.
    """
    guard = max(2 * cutoff, cutoff + guess)
    prev = None
    for _ in range(7):
        block = expm(generator_at(guard))[:cutoff, :cutoff]
        if prev is not None and np.max(np.abs(block - prev)) < 1e-13:
            return block
        prev = block
        guard *= 2
    return prev


def displacement_matrix(amplitude: float, phase: float, cutoff: int) -> GateMatrix:
    """D(alpha) = exp(alpha a^dag - alpha* a) with alpha = amplitude * e^{i phase}.

    The matrix is the cutoff x cutoff block of the true operator, so it
    is sub-unitary: displacing near the cutoff loses probability mass.
    """
    _check_cutoff(cutoff)
    if not np.isfinite(amplitude):
        raise ValueError("displacement amplitude must be finite")
    alpha = amplitude * np.exp(1j * phase)

    def gen(dim):
        a, adag = ladder_matrices(dim)
        return alpha * adag - np.conj(alpha) * a

    guess = int(np.ceil(4.0 * abs(amplitude) * (np.sqrt(cutoff) + abs(amplitude)))) + 16
    return GateMatrix(cutoff, _cropped_exp(gen, cutoff, guess), ONE_MODE)


def squeezing_matrix(amplitude: float, phase: float, cutoff: int) -> GateMatrix:
    """S(z) = exp((z* a^2 - z a^dag^2) / 2) with z = amplitude * e^{i phase}.

    Cropped from the true operator like the displacement gate.
    """
    _check_cutoff(cutoff)
    if not np.isfinite(amplitude):
        raise ValueError("squeezing amplitude must be finite")
    z = amplitude * np.exp(1j * phase)

    def gen(dim):
        a, adag = ladder_matrices(dim)
        return 0.5 * (np.conj(z) * (a @ a) - z * (adag @ adag))

    guess = int(np.ceil(60.0 * abs(amplitude))) + 16
    return GateMatrix(cutoff, _cropped_exp(gen, cutoff, guess), ONE_MODE)


def rotation_matrix(phi: float, cutoff: int) -> GateMatrix:
    """Phase rotation R(phi) = diag(e^{i phi n}); exactly unitary."""
    _check_cutoff(cutoff)
    n = np.arange(cutoff)
    return GateMatrix(cutoff, np.diag(np.exp(1j * phi * n)), ONE_MODE)


def kerr_matrix(kappa: float, cutoff: int) -> GateMatrix:
    """Kerr nonlinearity diag(e^{i kappa n^2}); exactly unitary at any cutoff."""
    _check_cutoff(cutoff)
    n = np.arange(cutoff)
    return GateMatrix(cutoff, np.diag(np.exp(1j * kappa * n**2)), ONE_MODE)


def _bs_block_generator(n: int, phase: float) -> np.ndarray:
    """Generator of e^{i phi} a^dag b - e^{-i phi} a b^dag on the total-photon-n block.

    Block basis |m, n-m> ordered by m; the full block is finite, so the
    exponential per block is the exact infinite-dimensional operator.
    """
    k = np.zeros((n + 1, n + 1), dtype=np.complex128)
    for m in range(n):
        amp = np.sqrt((m + 1) * (n - m))
        k[m + 1, m] = np.exp(1j * phase) * amp
        k[m, m + 1] = -np.exp(-1j * phase) * amp
    return k


def beamsplitter_matrix(theta: float, phase: float, cutoff: int) -> GateMatrix:
    """BS(theta, phi) = exp(theta (e^{i phi} a^dag b - e^{-i phi} a b^dag)).

    Number-conserving, so built exactly per total-photon block; entries
    for pairs with both occupations below the cutoff are those of the
    true operator.  Returned as a D^2 x D^2 matrix over the row-major
    pair index (first mode is the slow index).
    """
    _check_cutoff(cutoff)
    out = np.zeros((cutoff**2, cutoff**2), dtype=np.complex128)
    for n in range(2 * cutoff - 1):
        block = expm(theta * _bs_block_generator(n, phase))
        ms = [m for m in range(n + 1) if m < cutoff and n - m < cutoff]
        flat = np.array([m * cutoff + (n - m) for m in ms])
        out[np.ix_(flat, flat)] = block[np.ix_(ms, ms)]
    return GateMatrix(cutoff**2, out, TWO_MODE)


def apply_one_mode(state: FockState, gate: GateMatrix, mode: int) -> FockState:
    """Contract a one-mode gate with the selected mode index."""
    if gate.arity != ONE_MODE:
        raise ShapeError(f"expected a one-mode gate, got {gate.arity}")
    if gate.dim != state.cutoff:
        raise ShapeError(f"gate dim {gate.dim} does not match cutoff {state.cutoff}")
    if not 0 <= mode < state.num_modes:
        raise InvalidModesError(f"mode {mode} out of range for {state.num_modes} modes")
    tens = state.tensor()
    moved = np.moveaxis(tens, mode, -1)
    out = np.moveaxis(moved @ gate.entries.T, -1, mode)
    return FockState(state.num_modes, state.cutoff, out.reshape(-1))


def apply_two_mode(state: FockState, gate: GateMatrix, mode_a: int, mode_b: int) -> FockState:
    """Contract a two-mode gate with the ordered mode pair (mode_a, mode_b)."""
    if gate.arity != TWO_MODE:
        raise ShapeError(f"expected a two-mode gate, got {gate.arity}")
    if gate.dim != state.cutoff**2:
        raise ShapeError(f"gate dim {gate.dim} does not match cutoff {state.cutoff} pair")
    if mode_a == mode_b:
        raise InvalidModesError("mode_a and mode_b must differ")
    for m in (mode_a, mode_b):
        if not 0 <= m < state.num_modes:
            raise InvalidModesError(f"mode {m} out of range for {state.num_modes} modes")
    d = state.cutoff
    tens = state.tensor()
    moved = np.moveaxis(tens, (mode_a, mode_b), (-2, -1))
    lead = moved.shape[:-2]
    flat = moved.reshape(lead + (d * d,))
    out = flat @ gate.entries.T
    out = np.moveaxis(out.reshape(lead + (d, d)), (-2, -1), (mode_a, mode_b))
    return FockState(state.num_modes, state.cutoff, out.reshape(-1))


def state_norm_sq(state: FockState) -> float:
    """Sum of |amplitude|^2; at most 1 up to rounding, less after truncation loss."""
    return float(np.sum(np.abs(state.amplitudes) ** 2))


def homodyne_x_expectation(state: FockState, mode: int) -> float:
    """Normalized position-quadrature expectation <x>/<1> on one mode.

    Dividing by the squared norm keeps the readout unbiased when
    truncation has removed probability mass.
    """
    if not 0 <= mode < state.num_modes:
        raise InvalidModesError(f"mode {mode} out of range for {state.num_modes} modes")
    norm_sq = state_norm_sq(state)
    if norm_sq <= 0.0:
        raise DegenerateStateError("homodyne expectation undefined on a zero-norm state")
    x_gate = GateMatrix(state.cutoff, position_matrix(state.cutoff), ONE_MODE)
    x_applied = apply_one_mode(state, x_gate, mode)
    val = np.vdot(state.amplitudes, x_applied.amplitudes)
    return float(val.real) / norm_sq
