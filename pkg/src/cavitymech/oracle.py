"""Brute-force truncated-Fock-space master-equation solver.

Independent of the Gaussian module: states are density matrices on the
product space of truncated oscillators, dynamics is the Lindblad equation

    d rho/dt = -i [H, rho] + sum_k (c_k rho c_k^dag - {c_k^dag c_k, rho}/2)

with H in rad/s (hbar = 1). Operators are dense; the Liouvillian used for
time stepping and for the null-space solve is assembled as a sparse matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .model import HybridSystem

MAX_DIMENSION = 4096

__all__ = [
    "FockSpec",
    "DensityOperator",
    "Observable",
    "TruncationError",
    "DegenerateSteadyStateError",
    "number",
    "quadrature",
    "coherent_ket",
    "fock_ket",
    "thermal_matrix",
    "build_hamiltonian",
    "collapse_operators",
    "liouvillian",
    "lindblad_evolve",
    "lindblad_steady_state",
    "expectation",
    "fidelity",
    "rotate",
]


class TruncationError(RuntimeError):
    pass


class DegenerateSteadyStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class FockSpec:
    dims: tuple[int, ...]
    mode_labels: tuple[str, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(self.mode_labels)
        if len(dims) != len(labels):
            raise ValueError("one truncation dimension per mode label")
        if any(d < 2 for d in dims):
            raise ValueError(f"every truncation dimension must be >= 2, got {dims}")
        if len(set(labels)) != len(labels):
            raise ValueError(f"mode labels must be unique, got {labels}")
        if math.prod(dims) > MAX_DIMENSION:
            raise ValueError(f"product dimension {math.prod(dims)} exceeds the cap {MAX_DIMENSION}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "mode_labels", labels)

    @property
    def dimension(self) -> int:
        return math.prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.mode_labels.index(label)
        except ValueError:
            raise KeyError(f"mode {label!r} not in {self.mode_labels}") from None

    def embed(self, label: str, op: np.ndarray) -> np.ndarray:
        k = self.index(label)
        out = np.ones((1, 1))
        for j, d in enumerate(self.dims):
            out = np.kron(out, op if j == k else np.eye(d))
        return out

    def destroy(self, label: str) -> np.ndarray:
        d = self.dims[self.index(label)]
        return self.embed(label, np.diag(np.sqrt(np.arange(1, d)), 1))

    def num(self, label: str) -> np.ndarray:
        d = self.dims[self.index(label)]
        return self.embed(label, np.diag(np.arange(d, dtype=float)))

    def doubled(self) -> "FockSpec":
        return FockSpec(tuple(2 * d for d in self.dims), self.mode_labels)


def _check_density(matrix: np.ndarray) -> None:
    herm = np.max(np.abs(matrix - matrix.conj().T))
    if herm > 1e-10:
        raise ValueError(f"density matrix not Hermitian (deviation {herm:.3g})")
    tr = np.trace(matrix).real
    if abs(tr - 1.0) > 1e-10:
        raise ValueError(f"density matrix trace {tr:.12g} != 1")
    lam = np.linalg.eigvalsh(0.5 * (matrix + matrix.conj().T)).min()
    if lam < -1e-8:
        raise ValueError(f"density matrix has negative eigenvalue {lam:.3g}")


@dataclass(frozen=True)
class DensityOperator:
    matrix: np.ndarray
    spec: FockSpec

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.spec.dimension
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match spec dimension {n}")
        _check_density(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_ket(cls, ket: np.ndarray, spec: FockSpec) -> "DensityOperator":
        ket = np.asarray(ket, dtype=complex)
        ket = ket / np.linalg.norm(ket)
        return cls(np.outer(ket, ket.conj()), spec)

    @classmethod
    def product(cls, spec: FockSpec, factors: Mapping[str, np.ndarray]) -> "DensityOperator":
        """Tensor product of single-mode matrices; missing modes are vacuum."""
        out = np.ones((1, 1), dtype=complex)
        for label, d in zip(spec.mode_labels, spec.dims):
            if label in factors:
                f = np.asarray(factors[label], dtype=complex)
                if f.ndim == 1:
                    f = np.outer(f, f.conj())
                if f.shape != (d, d):
                    raise ValueError(f"factor for {label!r} has shape {f.shape}, expected {(d, d)}")
            else:
                f = np.zeros((d, d), dtype=complex)
                f[0, 0] = 1.0
            out = np.kron(out, f)
        unknown = set(factors) - set(spec.mode_labels)
        if unknown:
            raise KeyError(f"unknown modes {sorted(unknown)}")
        return cls(out, spec)

    def reduced(self, label: str) -> np.ndarray:
        """Partial trace onto one mode."""
        k = self.spec.index(label)
        dims = self.spec.dims
        t = self.matrix.reshape(dims + dims)
        n = len(dims)
        keep_in = "".join(chr(97 + j) for j in range(n))
        keep_out = "".join(chr(97 + j) if j != k else chr(97 + n + j) for j in range(n))
        sub = f"{keep_in}{keep_out}->{chr(97 + k)}{chr(97 + n + k)}"
        return np.einsum(sub, t)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def top_level_population(self, label: str) -> float:
        red = self.reduced(label)
        return float(red[-1, -1].real)


@dataclass(frozen=True)
class Observable:
    kind: Literal["number", "quadrature"]
    label: str
    which: Literal["q", "p"] | None = None


def number(label: str) -> Observable:
    return Observable("number", label)


def quadrature(label: str, which: Literal["q", "p"] = "q") -> Observable:
    if which not in ("q", "p"):
        raise ValueError("quadrature must be 'q' or 'p'")
    return Observable("quadrature", label, which)


def coherent_ket(dim: int, alpha: complex) -> np.ndarray:
    """Truncated coherent state, renormalized on the truncated space."""
    n = np.arange(dim)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    alpha = complex(alpha)
    if alpha == 0:
        ket = np.zeros(dim, dtype=complex)
        ket[0] = 1.0
        return ket
    mag = np.exp(n * math.log(abs(alpha)) - 0.5 * log_fact)
    ket = mag * np.exp(1j * n * np.angle(alpha))
    return ket / np.linalg.norm(ket)


def fock_ket(dim: int, n: int) -> np.ndarray:
    if not 0 <= n < dim:
        raise ValueError(f"Fock level {n} outside truncation {dim}")
    ket = np.zeros(dim, dtype=complex)
    ket[n] = 1.0
    return ket


def thermal_matrix(dim: int, n_mean: float) -> np.ndarray:
    """Truncated Bose-Einstein distribution with mean ``n_mean`` before truncation."""
    if n_mean == 0:
        p = np.zeros(dim)
        p[0] = 1.0
    else:
        r = n_mean / (1.0 + n_mean)
        p = r ** np.arange(dim)
        p /= p.sum()
    return np.diag(p).astype(complex)


def _check_labels(system: HybridSystem, spec: FockSpec) -> None:
    if set(system.mode_labels) != set(spec.mode_labels):
        raise KeyError(
            f"spec modes {spec.mode_labels} do not match system modes {tuple(system.mode_labels)}")


def build_hamiltonian(
    system: HybridSystem,
    spec: FockSpec,
    form: Literal["full_parametric", "rwa_beamsplitter"] = "full_parametric",
    couplings: Sequence[float] | None = None,
) -> np.ndarray:
    """Linearized Hamiltonian (rad/s) on the truncated space.

    ``full_parametric``: Delta a^dag a + omega_m d^dag d + s Gamma (a + a^dag)(d + d^dag)
    per cavity, in the frame rotating at each drive.
    ``rwa_beamsplitter``: s Gamma (a^dag d + d^dag a) in the interaction frame,
    plus the residual detuning (Delta - omega_m) a^dag a, which vanishes when
    matched.
    """
    _check_labels(system, spec)
    Gs = list(system.couplings() if couplings is None else couplings)
    d = spec.destroy("mech")
    H = np.zeros((spec.dimension, spec.dimension), dtype=complex)
    if form == "full_parametric":
        H += system.mech.omega_m * (d.conj().T @ d)
    elif form != "rwa_beamsplitter":
        raise ValueError(f"unknown form {form!r}")
    for (cav, drive), G, s in zip(system.cavities, Gs, system.em_signs):
        a = spec.destroy(cav.band)
        n_a = a.conj().T @ a
        if form == "full_parametric":
            H += drive.detuning * n_a
            H += s * G * (a + a.conj().T) @ (d + d.conj().T)
        else:
            H += (drive.detuning - system.mech.omega_m) * n_a
            H += s * G * (a.conj().T @ d + d.conj().T @ a)
    return 0.5 * (H + H.conj().T)


def collapse_operators(system: HybridSystem, spec: FockSpec) -> list[np.ndarray]:
    """Cavity leakage and thermal mechanical contact.

    sqrt(gamma (n_c + 1)) a [and sqrt(gamma n_c) a^dag] per cavity,
    sqrt(gamma_m (n_bath + 1)) d and sqrt(gamma_m n_bath) d^dag.
    """
    _check_labels(system, spec)
    ops = []
    for cav, _ in system.cavities:
        a = spec.destroy(cav.band)
        ops.append(math.sqrt(cav.gamma * (cav.n_thermal + 1.0)) * a)
        if cav.n_thermal > 0:
            ops.append(math.sqrt(cav.gamma * cav.n_thermal) * a.conj().T)
    d = spec.destroy("mech")
    n_bath = system.n_bath
    ops.append(math.sqrt(system.mech.gamma_m * (n_bath + 1.0)) * d)
    if n_bath > 0:
        ops.append(math.sqrt(system.mech.gamma_m * n_bath) * d.conj().T)
    return ops


def liouvillian(H: np.ndarray, collapse_set: Sequence[np.ndarray]) -> sp.csr_matrix:
    """Sparse superoperator acting on row-major vec(rho)."""
    n = H.shape[0]
    eye = sp.identity(n, format="csr", dtype=complex)
    Hs = sp.csr_matrix(H)
    L = -1j * (sp.kron(Hs, eye) - sp.kron(eye, Hs.T))
    for c in collapse_set:
        cs = sp.csr_matrix(c)
        cdc = (cs.conj().T @ cs).tocsr()
        L = L + sp.kron(cs, cs.conj()) - 0.5 * (sp.kron(cdc, eye) + sp.kron(eye, cdc.T))
    return sp.csr_matrix(L)


def _overflow_check(rho: DensityOperator, tol: float | None) -> None:
    if tol is None:
        return
    for label in rho.spec.mode_labels:
        top = rho.top_level_population(label)
        if top > tol:
            raise TruncationError(
                f"mode {label!r}: top Fock level population {top:.3g} exceeds {tol:.1g}; "
                "increase its truncation dimension")


def lindblad_evolve(
    H: np.ndarray,
    collapse_set: Sequence[np.ndarray],
    rho0: DensityOperator,
    t_grid: Sequence[float],
    rtol: float = 1e-10,
    overflow_tol: float | None = 1e-4,
) -> list[DensityOperator]:
    """Integrate the master equation to each time in ``t_grid`` (s).

    ``overflow_tol`` bounds the population of the highest kept Fock level of
    every mode; pass None when the dynamics provably stays in the truncated
    space (e.g. excitation-conserving dynamics from a state inside it).
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing and start at t >= 0")
    spec = rho0.spec
    n = spec.dimension
    if H.shape != (n, n):
        raise ValueError("Hamiltonian does not match the state dimension")
    _overflow_check(rho0, overflow_tol)
    if t[-1] == 0:
        return [rho0]
    L = liouvillian(H, collapse_set)
    sol = solve_ivp(lambda _t, y: L @ y, (0.0, float(t[-1])), rho0.matrix.ravel().copy(),
                    method="DOP853", t_eval=t, rtol=rtol, atol=1e-3 * rtol)
    if sol.status != 0:
        raise RuntimeError(f"master-equation integration failed: {sol.message}")
    out = []
    for j, tj in enumerate(t):
        if tj == 0:
            out.append(rho0)
            continue
        m = sol.y[:, j].reshape(n, n)
        rho = DensityOperator(0.5 * (m + m.conj().T), spec)
        _overflow_check(rho, overflow_tol)
        out.append(rho)
    return out


# Hilbert dimension up to which the null space is counted by dense SVD (cost ~ n^6)
_DENSE_LIMIT = 24
# Liouville-space size above which sparse LU fill exhausts desk-scale memory
_DIRECT_LIMIT = 40_000


def _preconditioned_solve(A: sp.csc_matrix, b: np.ndarray) -> np.ndarray:
    """GMRES with an incomplete-LU preconditioner, tightening the ILU on failure."""
    for drop_tol, fill in ((1e-2, 3.0), (1e-3, 6.0)):
        ilu = spla.spilu(A, drop_tol=drop_tol, fill_factor=fill, permc_spec="MMD_AT_PLUS_A")
        M = spla.LinearOperator(A.shape, ilu.solve, dtype=complex)
        x, info = spla.gmres(A, b, M=M, rtol=1e-13, restart=100, maxiter=20)
        if info == 0:
            return x
    raise RuntimeError(f"GMRES did not converge (info={info})")


def lindblad_steady_state(
    H: np.ndarray,
    collapse_set: Sequence[np.ndarray],
    spec: FockSpec,
    overflow_tol: float | None = 1e-4,
) -> DensityOperator:
    """Unique fixed point of the Liouvillian, normalized to unit trace."""
    n = spec.dimension
    L = liouvillian(H, collapse_set)
    scale = float(abs(L).sum(axis=1).max())
    if scale == 0:
        raise DegenerateSteadyStateError("Liouvillian vanishes identically")
    Ls = (L / scale).tocsr()
    trace_row = np.eye(n, dtype=complex).ravel()

    if n <= _DENSE_LIMIT:
        dense = Ls.toarray()
        sv = np.linalg.svd(dense, compute_uv=False)
        null_dim = int(np.sum(sv < 1e-10 * sv[0]))
        if null_dim > 1:
            raise DegenerateSteadyStateError(f"steady-state null space has dimension {null_dim}")
        if null_dim == 0:
            raise RuntimeError("Liouvillian has no null vector")
    # replace one row (the |0><0| equation) by the trace condition
    A = Ls.tolil()
    A[0, :] = trace_row
    A = A.tocsc()
    b = np.zeros(n * n, dtype=complex)
    b[0] = 1.0
    try:
        if n * n <= _DIRECT_LIMIT:
            x = spla.splu(A).solve(b)
        else:
            x = _preconditioned_solve(A, b)
    except RuntimeError as exc:
        raise DegenerateSteadyStateError(f"steady-state system is singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise DegenerateSteadyStateError("steady-state solve produced non-finite values")
    m = x.reshape(n, n)
    m = 0.5 * (m + m.conj().T)
    m /= np.trace(m).real
    res = np.linalg.norm(Ls @ m.ravel()) / max(1.0, np.linalg.norm(m))
    if res > 1e-9:
        raise DegenerateSteadyStateError(
            f"steady-state residual {res:.3g} exceeds 1e-9; the fixed point may not be unique")
    rho = DensityOperator(m, spec)
    _overflow_check(rho, overflow_tol)
    return rho


def expectation(rho: DensityOperator, observable: Observable) -> float:
    spec = rho.spec
    a = spec.destroy(observable.label)
    if observable.kind == "number":
        op = a.conj().T @ a
    elif observable.kind == "quadrature":
        if observable.which == "q":
            op = (a + a.conj().T) / math.sqrt(2.0)
        else:
            op = (a - a.conj().T) / (1j * math.sqrt(2.0))
    else:
        raise ValueError(f"unknown observable kind {observable.kind!r}")
    return float(np.real(np.trace(rho.matrix @ op)))


def _as_matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def fidelity(rho1, rho2) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))^2.

    Accepts DensityOperator instances or plain square matrices (e.g. reduced
    single-mode states).
    """
    if isinstance(rho1, DensityOperator) and isinstance(rho2, DensityOperator):
        if rho1.spec.dims != rho2.spec.dims:
            raise ValueError(f"dimension mismatch: {rho1.spec.dims} vs {rho2.spec.dims}")
    m1, m2 = _as_matrix(rho1), _as_matrix(rho2)
    if m1.shape != m2.shape:
        raise ValueError(f"dimension mismatch: {m1.shape} vs {m2.shape}")
    s = _psd_sqrt(m1)
    w = np.linalg.eigvalsh(s @ m2 @ s)
    F = float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
    return min(max(F, 0.0), 1.0)


def rotate(matrix: np.ndarray, phase: float) -> np.ndarray:
    """Apply exp(-i phase n) to a single-mode density matrix."""
    d = matrix.shape[0]
    u = np.exp(-1j * phase * np.arange(d))
    return (u[:, None] * matrix) * u.conj()[None, :]

