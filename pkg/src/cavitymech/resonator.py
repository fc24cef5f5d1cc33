"""Clamped-clamped Euler-Bernoulli beams under axial tension.

The transverse deflection obeys E I w'''' - N w'' = rho A omega^2 w with
w = w' = 0 at both ends. Writing w ~ cosh(b1 x), sinh(b1 x), cos(b2 x),
sin(b2 x) with b1^2 - b2^2 = N / (E I), the clamped boundary conditions give

    2 b1 b2 (1 - cosh(b1 L) cos(b2 L)) + (b1^2 - b2^2) sinh(b1 L) sin(b2 L) = 0.

Roots are searched in the dimensionless oscillatory wavenumber y = b2 L,
with tension entering through tau = N L^2 / (E I).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import TWO_PI, MechanicalMode, quantum_enabled, thermal_force_psd, zero_point_motion

__all__ = [
    "BeamSpec",
    "ModeShape",
    "RootBracketError",
    "characteristic",
    "beam_frequency",
    "mode_shape",
    "flexural_frequency",
    "string_frequency",
    "design_report",
    "stress_sweep_csv",
]


class RootBracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class BeamSpec:
    length: float
    width: float
    thickness: float
    youngs_modulus: float
    density: float
    stress: float = 0.0

    def __post_init__(self):
        for name in ("length", "width", "thickness", "youngs_modulus", "density"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.stress < 0:
            raise ValueError(f"stress must be non-negative, got {self.stress}")

    @property
    def area(self) -> float:
        return self.width * self.thickness

    @property
    def moment(self) -> float:
        return self.width * self.thickness**3 / 12.0

    @property
    def axial_load(self) -> float:
        return self.stress * self.area

    @property
    def tension_parameter(self) -> float:
        """Dimensionless tension N L^2 / (E I)."""
        return self.axial_load * self.length**2 / (self.youngs_modulus * self.moment)

    @property
    def effective_mass(self) -> float:
        """rho A L / 2, the string-limit modal mass of the fundamental."""
        return self.density * self.area * self.length / 2.0

    def with_stress(self, stress: float) -> "BeamSpec":
        return BeamSpec(self.length, self.width, self.thickness,
                        self.youngs_modulus, self.density, stress)


def characteristic(y: float, tau: float) -> float:
    """Clamped-clamped determinant divided by cosh(b1 L); finite for large tension."""
    x = math.sqrt(y * y + tau)
    sech = 2.0 * math.exp(-x) / (1.0 + math.exp(-2.0 * x))
    return 2.0 * x * y * (sech - math.cos(y)) + tau * math.tanh(x) * math.sin(y)


def _wavenumber_root(tau: float, n: int) -> float:
    if n < 1:
        raise ValueError("mode index starts at 1")
    step = math.pi / 64.0
    y_hi = (n + 1.5) * math.pi
    grid = np.arange(step, y_hi + step, step)
    vals = np.array([characteristic(y, tau) for y in grid])
    found = 0
    for k in range(grid.size - 1):
        if vals[k] == 0.0 or vals[k] * vals[k + 1] < 0:
            found += 1
            if found == n:
                if vals[k] == 0.0:
                    return float(grid[k])
                return brentq(characteristic, grid[k], grid[k + 1], args=(tau,),
                              xtol=1e-14, rtol=1e-13, maxiter=200)
    raise RootBracketError(
        f"located only {found} sign changes of the characteristic function in "
        f"(0, {y_hi:.4g}] for tau={tau:.4g}; mode {n} not bracketed")


def _frequency_from_wavenumber(spec: BeamSpec, y: float) -> float:
    b2 = y / spec.length
    EI, rhoA = spec.youngs_modulus * spec.moment, spec.density * spec.area
    omega = b2 * math.sqrt((EI * b2 * b2 + spec.axial_load) / rhoA)
    return omega / TWO_PI


def beam_frequency(spec: BeamSpec, n: int = 1) -> float:
    """n-th clamped-clamped resonance in Hz."""
    return _frequency_from_wavenumber(spec, _wavenumber_root(spec.tension_parameter, n))


def flexural_frequency(spec: BeamSpec, n: int = 1) -> float:
    """Zero-tension closed form (lambda_n^2 / 2 pi L^2) sqrt(E I / rho A).

    lambda_n is the n-th positive root of cos(lambda) cosh(lambda) = 1.
    """
    lam = brentq(lambda z: math.cos(z) * math.cosh(z) - 1.0,
                 (n + 0.5) * math.pi - 0.5, (n + 0.5) * math.pi + 0.5, xtol=1e-15)
    return lam**2 / (TWO_PI * spec.length**2) * math.sqrt(
        spec.youngs_modulus * spec.moment / (spec.density * spec.area))


def string_frequency(spec: BeamSpec, n: int = 1) -> float:
    """High-tension limit (n / 2L) sqrt(stress / rho)."""
    return n / (2.0 * spec.length) * math.sqrt(spec.stress / spec.density)


@dataclass(frozen=True)
class ModeShape:
    x: np.ndarray
    deflection: np.ndarray
    slope: np.ndarray


def _sinh_over_cosh(a, b):
    return (np.exp(a - b) - np.exp(-a - b)) / (1.0 + np.exp(-2.0 * b))


def _cosh_over_cosh(a, b):
    return (np.exp(a - b) + np.exp(-a - b)) / (1.0 + np.exp(-2.0 * b))


def _shape_terms(tau: float, y: float, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized w(s) and dw/ds on the unit interval."""
    xl = math.sqrt(y * y + tau)
    r = xl / y
    cL, sL = math.cos(y), math.sin(y)
    sech = _cosh_over_cosh(0.0, xl)
    denom = math.tanh(xl) - r * sL * sech
    k = (1.0 - cL * sech) / denom
    # cosh(b1 x) - k sinh(b1 x), rewritten to avoid cancellation between huge terms
    hyp = (_sinh_over_cosh(xl * (1.0 - s), xl)
           - r * sL * _cosh_over_cosh(xl * s, xl)
           + cL * _sinh_over_cosh(xl * s, xl)) / denom
    w = hyp - np.cos(y * s) + k * r * np.sin(y * s)
    # d/dx [cosh - k sinh](b1 x) = b1 [sinh - k cosh](b1 x)
    dhyp = xl * (-_cosh_over_cosh(xl * (1.0 - s), xl)
                 - r * sL * _sinh_over_cosh(xl * s, xl)
                 + cL * _cosh_over_cosh(xl * s, xl)) / denom
    dw = dhyp + y * np.sin(y * s) + k * r * y * np.cos(y * s)
    return w, dw


def mode_shape(spec: BeamSpec, n: int, x_grid) -> ModeShape:
    """Clamped-clamped eigenfunction at the solved wavenumbers.

    w(x) = cosh(b1 x) - cos(b2 x) - k (sinh(b1 x) - (b1/b2) sin(b2 x)),
    k = (cosh(b1 L) - cos(b2 L)) / (sinh(b1 L) - (b1/b2) sin(b2 L)),
    scaled so the largest-magnitude deflection along the beam equals +1
    (located on a dense internal grid, so sparse ``x_grid`` samples are
    normalized consistently). All hyperbolic terms are divided by
    cosh(b1 L) to stay finite at high tension.
    """
    tau = spec.tension_parameter
    y = _wavenumber_root(tau, n)
    L = spec.length
    x = np.asarray(x_grid, dtype=float)
    w, dw = _shape_terms(tau, y, x / L)
    dense, _ = _shape_terms(tau, y, np.linspace(0.0, 1.0, 64 * n + 1))
    peak = dense[np.argmax(np.abs(dense))]
    return ModeShape(x, w / peak, dw / (peak * L))


def design_report(spec: BeamSpec, mechanical_Q: float, T_bath: float) -> dict:
    """Fundamental-mode figures of merit for a candidate string resonator.

    The effective mass is rho A L / 2; x_zp and the thermal force PSD use it
    with gamma_m = omega_1 / Q.
    """
    if not mechanical_Q > 0:
        raise ValueError("mechanical Q must be positive")
    f1 = beam_frequency(spec, 1)
    mech = MechanicalMode(TWO_PI * f1, TWO_PI * f1 / mechanical_Q, spec.effective_mass, T_bath)
    enabled, threshold = quantum_enabled(mech)
    return {
        "f1_Hz": f1,
        "Q": mechanical_Q,
        "Qf_Hz": mechanical_Q * f1,
        "threshold_Hz": threshold,
        "quantum_enabled": bool(enabled),
        "T_bath_K": T_bath,
        "effective_mass_kg": spec.effective_mass,
        "x_zp_m": zero_point_motion(mech),
        "S_F_N2_per_Hz": thermal_force_psd(mech),
        "tension_parameter": spec.tension_parameter,
        "string_limit_f1_Hz": string_frequency(spec, 1),
    }


def stress_sweep_csv(spec: BeamSpec, stresses) -> str:
    lines = ["stress_Pa,f1_Hz"]
    for sigma in stresses:
        lines.append(f"{float(sigma):.12g},{beam_frequency(spec.with_stress(float(sigma)), 1):.12g}")
    return "\n".join(lines) + "\n"

