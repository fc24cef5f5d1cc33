"""Linearized (Gaussian) dynamics of the driven mechanics-cavity system.

Quadratures are q = (a + a^dag)/sqrt(2), p = (a - a^dag)/(i sqrt(2)), so the
vacuum covariance is I/2. Modes are ordered mechanics first, then cavities in
the order given by the system. The equations of motion are

    d<u>/dt = A <u>,        dV/dt = A V + V A^T + D.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm, solve_continuous_lyapunov

from .model import CONSTANTS, TWO_PI, HybridSystem, MechanicalMode

__all__ = [
    "GaussianState",
    "LinearModel",
    "InstabilityError",
    "StiffnessError",
    "LinearizationWarning",
    "SpectrumSeries",
    "symplectic_form",
    "symplectic_eigenvalues",
    "linearize",
    "steady_state",
    "lyapunov_residual",
    "residual_bound",
    "phonon_number",
    "evolve",
    "gaussian_fidelity",
    "displacement_psd",
    "displacement_spectrum",
]


class InstabilityError(RuntimeError):
    """The drift matrix has an eigenvalue with non-negative real part."""


class StiffnessError(RuntimeError):
    pass


class LinearizationWarning(UserWarning):
    pass


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Williamson spectrum of a covariance matrix, sorted ascending."""
    n = cov.shape[0] // 2
    ev = np.linalg.eigvals(1j * symplectic_form(n) @ cov)
    return np.sort(np.abs(ev.real))[::2]


@dataclass(frozen=True)
class GaussianState:
    """First moments and covariance of an N-mode Gaussian state."""

    mean: np.ndarray
    cov: np.ndarray
    mode_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        n2 = mean.size
        if n2 % 2 or cov.shape != (n2, n2):
            raise ValueError(f"inconsistent shapes: mean {mean.shape}, cov {cov.shape}")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise ValueError("covariance is not symmetric")
        # single quadratures may dip below 1/2 (squeezing); only the joint bound is enforced
        herm = cov + 0.5j * symplectic_form(n2 // 2)
        if np.linalg.eigvalsh(herm).min() < -1e-9 * scale:
            raise ValueError("covariance violates the uncertainty relation")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if self.mode_labels is not None:
            object.__setattr__(self, "mode_labels", tuple(self.mode_labels))

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    def reduced(self, mode_index: int) -> "GaussianState":
        sl = slice(2 * mode_index, 2 * mode_index + 2)
        labels = None if self.mode_labels is None else (self.mode_labels[mode_index],)
        return GaussianState(self.mean[sl].copy(), self.cov[sl, sl].copy(), labels)

    def amplitude(self, mode_index: int) -> complex:
        """<a> of the selected mode."""
        q, p = self.mean[2 * mode_index: 2 * mode_index + 2]
        return complex(q, p) / math.sqrt(2.0)

    @classmethod
    def vacuum(cls, n_modes: int, mode_labels=None) -> "GaussianState":
        return cls(np.zeros(2 * n_modes), 0.5 * np.eye(2 * n_modes), mode_labels)

    @classmethod
    def thermal(cls, occupations: Sequence[float], mode_labels=None) -> "GaussianState":
        diag = np.repeat(np.asarray(occupations, dtype=float) + 0.5, 2)
        return cls(np.zeros(diag.size), np.diag(diag), mode_labels)

    def displaced(self, mode_index: int, alpha: complex) -> "GaussianState":
        mean = self.mean.copy()
        mean[2 * mode_index] += math.sqrt(2.0) * complex(alpha).real
        mean[2 * mode_index + 1] += math.sqrt(2.0) * complex(alpha).imag
        return GaussianState(mean, self.cov, self.mode_labels)


@dataclass(frozen=True)
class LinearModel:
    drift: np.ndarray
    diffusion: np.ndarray
    mode_labels: tuple[str, ...]
    rwa: bool = False
    couplings: tuple[float, ...] = field(default=())

    def __post_init__(self):
        A = np.asarray(self.drift, dtype=float)
        D = np.asarray(self.diffusion, dtype=float)
        if A.shape != D.shape or A.shape[0] != 2 * len(self.mode_labels):
            raise ValueError("drift/diffusion shapes do not match the mode count")
        if not np.allclose(D, D.T, rtol=0, atol=1e-12 * max(1.0, np.abs(D).max())):
            raise ValueError("diffusion matrix must be symmetric")
        if np.linalg.eigvalsh(D).min() < -1e-9 * max(1.0, np.abs(D).max()):
            raise ValueError("diffusion matrix must be positive semidefinite")
        object.__setattr__(self, "drift", A)
        object.__setattr__(self, "diffusion", D)
        object.__setattr__(self, "mode_labels", tuple(self.mode_labels))

    @property
    def n_modes(self) -> int:
        return len(self.mode_labels)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.drift)

    def is_hurwitz(self) -> bool:
        return bool(np.all(self.eigenvalues().real < 0))


def _rotation_block(freq: float, decay: float) -> np.ndarray:
    return np.array([[-decay / 2.0, freq], [-freq, -decay / 2.0]])


def linearize(
    system: HybridSystem,
    rwa: bool = False,
    couplings: Sequence[float] | None = None,
) -> LinearModel:
    """Linear quantum Langevin model about the driven steady state.

    With ``rwa=False`` the model lives in the frame rotating at each drive:
    cavity i has detuning Delta_i and couples to the mechanical position via
    2 s_i Gamma_i q_i q_m. With ``rwa=True`` only the beamsplitter part
    s_i Gamma_i (a_i^dag d + d^dag a_i) is kept, in the interaction frame at
    omega_m; the mismatch Delta_i - omega_m is kept as a residual detuning.

    ``couplings`` overrides the drive-derived Gamma_i (rad/s).
    """
    mech = system.mech
    n_bath = system.n_bath
    Gs = list(system.couplings() if couplings is None else couplings)
    if len(Gs) != len(system.cavities):
        raise ValueError("need one coupling per cavity")
    N = 1 + len(system.cavities)
    A = np.zeros((2 * N, 2 * N))
    D = np.zeros((2 * N, 2 * N))

    A[0:2, 0:2] = _rotation_block(0.0 if rwa else mech.omega_m, mech.gamma_m)
    D[0:2, 0:2] = mech.gamma_m * (n_bath + 0.5) * np.eye(2)

    if mech.gamma_m * n_bath > mech.omega_m:
        warnings.warn("gamma_m * n_bath exceeds omega_m; linearized cooling analysis is marginal",
                      LinearizationWarning, stacklevel=2)

    for i, ((cav, drive), G, s) in enumerate(zip(system.cavities, Gs, system.em_signs), start=1):
        k = 2 * i
        if rwa:
            if abs(drive.detuning - mech.omega_m) > 0.1 * mech.omega_m:
                raise ValueError(
                    f"rwa=True requires detuning near omega_m; {cav.band} cavity has "
                    f"Delta/omega_m = {drive.detuning / mech.omega_m:.3g}")
            A[k:k + 2, k:k + 2] = _rotation_block(drive.detuning - mech.omega_m, cav.gamma)
            A[0, k + 1] += s * G
            A[1, k] -= s * G
            A[k, 1] += s * G
            A[k + 1, 0] -= s * G
        else:
            A[k:k + 2, k:k + 2] = _rotation_block(drive.detuning, cav.gamma)
            A[1, k] -= 2.0 * s * G
            A[k + 1, 0] -= 2.0 * s * G
        D[k:k + 2, k:k + 2] = cav.gamma * (cav.n_thermal + 0.5) * np.eye(2)

    return LinearModel(A, D, tuple(system.mode_labels), rwa=rwa, couplings=tuple(Gs))


def lyapunov_residual(model: LinearModel, V: np.ndarray) -> float:
    A = model.drift
    return float(np.linalg.norm(A @ V + V @ A.T + model.diffusion))


def residual_bound(model: LinearModel, V: np.ndarray) -> float:
    """1e-10 |D| plus the float64 floor for storing V (64 eps |A| |V|)."""
    floor = 64.0 * np.finfo(float).eps * np.linalg.norm(model.drift) * np.linalg.norm(V)
    return float(1e-10 * np.linalg.norm(model.diffusion) + floor)


def steady_state(model: LinearModel) -> GaussianState:
    """Solve A V + V A^T + D = 0 for the stationary covariance."""
    ev = model.eigenvalues()
    worst = ev[np.argmax(ev.real)]
    if worst.real >= 0:
        raise InstabilityError(f"drift is not Hurwitz: eigenvalue {worst:.6g} has Re >= 0")
    A, D = model.drift, model.diffusion
    V = solve_continuous_lyapunov(A, -D)
    V = 0.5 * (V + V.T)
    # one step of iterative refinement
    R = A @ V + V @ A.T + D
    V = V + solve_continuous_lyapunov(A, -R)
    V = 0.5 * (V + V.T)
    residual = lyapunov_residual(model, V)
    if residual > residual_bound(model, V):
        raise RuntimeError(f"Lyapunov residual {residual:.3g} exceeds bound {residual_bound(model, V):.3g}")
    return GaussianState(np.zeros(A.shape[0]), V, model.mode_labels)


def phonon_number(state: GaussianState, mode_index: int = 0) -> float:
    """Fluctuation occupation (V_qq + V_pp - 1)/2 of one mode.

    The coherent part |<a>|^2 is excluded.
    """
    if not 0 <= mode_index < state.n_modes:
        raise IndexError(f"mode index {mode_index} out of range for {state.n_modes} modes")
    k = 2 * mode_index
    return 0.5 * (state.cov[k, k] + state.cov[k + 1, k + 1] - 1.0)


def _van_loan(A: np.ndarray, D: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Propagator phi = exp(A t) and noise Q = int_0^t phi(s) D phi(s)^T ds.

    The block exponential is only formed for a short step t / 2^k; the
    doubling Q(2h) = Q(h) + phi(h) Q(h) phi(h)^T then avoids the growing
    exp(-A t) block that overflows for long times.
    """
    n = A.shape[0]
    norm = float(np.linalg.norm(A, 1)) * t
    k = max(0, int(math.ceil(math.log2(norm))) if norm > 1.0 else 0)
    h = t / 2.0**k
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A
    M[:n, n:] = D
    M[n:, n:] = A.T
    F = expm(M * h)
    phi = F[n:, n:].T
    Q = phi @ F[:n, n:]
    for _ in range(k):
        Q = Q + phi @ Q @ phi.T
        phi = phi @ phi
    return phi, 0.5 * (Q + Q.T)


def evolve(
    model: LinearModel,
    state0: GaussianState,
    t_grid: Sequence[float],
    method: str = "rk",
    rtol: float = 1e-8,
) -> list[GaussianState]:
    """Propagate first and second moments to each time in ``t_grid``.

    ``method="rk"`` integrates the stacked moment equations with an adaptive
    embedded Runge-Kutta scheme (DOP853). ``method="expm"`` uses the exact
    propagator (matrix exponential with the Van Loan integral for the noise).
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing and start at t >= 0")
    A, D = model.drift, model.diffusion
    n = A.shape[0]
    if state0.mean.size != n:
        raise ValueError("initial state does not match the model size")
    labels = model.mode_labels

    if method == "expm":
        out = []
        for ti in t:
            if ti == 0:
                out.append(state0)
                continue
            phi, Q = _van_loan(A, D, ti)
            V = phi @ state0.cov @ phi.T + Q
            out.append(GaussianState(phi @ state0.mean, 0.5 * (V + V.T), labels))
        return out
    if method != "rk":
        raise ValueError(f"unknown method {method!r}")

    def rhs(_t, y):
        m = y[:n]
        V = y[n:].reshape(n, n)
        V = 0.5 * (V + V.T)
        dV = A @ V + V @ A.T + D
        return np.concatenate([A @ m, dV.ravel()])

    y0 = np.concatenate([state0.mean, state0.cov.ravel()])
    rate = max(1.0, float(np.abs(A).max()))
    scale = max(1.0, float(np.abs(y0).max()), float(np.abs(D).max()) / rate)
    out: list[GaussianState] = []
    if t[-1] == 0:
        return [state0]
    sol = solve_ivp(rhs, (0.0, float(t[-1])), y0, method="DOP853", t_eval=t,
                    rtol=rtol, atol=1e-3 * rtol * scale)
    if sol.status != 0:
        raise StiffnessError(
            f"integration failed ({sol.message}); the model may be too stiff, "
            "try rwa=True or method='expm'")
    for j, ti in enumerate(t):
        if ti == 0:
            out.append(state0)
            continue
        V = sol.y[n:, j].reshape(n, n)
        out.append(GaussianState(sol.y[:n, j].copy(), 0.5 * (V + V.T), labels))
    return out


def gaussian_fidelity(state1: GaussianState, state2: GaussianState) -> float:
    """Uhlmann fidelity between two single-mode Gaussian states.

    F = exp(-d^T (V1+V2)^-1 d / 2) / (sqrt(det(V1+V2) + delta) - sqrt(delta))
    with delta = 4 (det V1 - 1/4)(det V2 - 1/4), vacuum variance 1/2.
    """
    if state1.n_modes != 1 or state2.n_modes != 1:
        raise ValueError("gaussian_fidelity is defined here for single-mode states")
    S = state1.cov + state2.cov
    d = state1.mean - state2.mean
    big = np.linalg.det(S)
    delta = 4.0 * max(np.linalg.det(state1.cov) - 0.25, 0.0) * max(np.linalg.det(state2.cov) - 0.25, 0.0)
    expo = math.exp(-0.5 * float(d @ np.linalg.solve(S, d)))
    return min(1.0, expo / (math.sqrt(big + delta) - math.sqrt(delta)))


def displacement_psd(mech: MechanicalMode, freq_Hz, T: float | None = None):
    """One-sided thermal displacement PSD (m^2/Hz) at ordinary frequency."""
    T = mech.T_bath if T is None else T
    w = TWO_PI * np.asarray(freq_Hz, dtype=float)
    S_F = 4.0 * mech.mass * mech.gamma_m * CONSTANTS.k_B * T
    chi_inv2 = (mech.omega_m**2 - w**2) ** 2 + mech.gamma_m**2 * w**2
    return S_F / (mech.mass**2 * chi_inv2)


@dataclass(frozen=True)
class SpectrumSeries:
    freq_Hz: np.ndarray
    S_x: np.ndarray

    header = "freq_Hz,S_x_m2_per_Hz"

    def to_csv(self) -> str:
        lines = [self.header]
        lines += [f"{f:.12g},{s:.12g}" for f, s in zip(self.freq_Hz, self.S_x)]
        return "\n".join(lines) + "\n"


def displacement_spectrum(
    mech: MechanicalMode,
    T: float | None,
    freq_grid,
    imprecision_floor: float | None = None,
) -> SpectrumSeries:
    """Thermal displacement spectrum plus an optional flat imprecision floor."""
    f = np.asarray(freq_grid, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency grid must be positive")
    S = displacement_psd(mech, f, T)
    if imprecision_floor is not None:
        S = S + imprecision_floor
    return SpectrumSeries(f, S)

