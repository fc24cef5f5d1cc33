"""Physical constants, mode records and the closed-form figures of merit.

Internal frequencies and rates are angular (rad/s). Linewidths are full
widths (energy decay rates). The detuning convention is
``detuning = omega_c - omega_drive``, so red detuning is positive.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

from scipy import constants as _codata

__all__ = [
    "PhysicalConstants",
    "CONSTANTS",
    "MechanicalMode",
    "CavityMode",
    "Drive",
    "DetectionChain",
    "HybridSystem",
    "Comparison",
    "RegimeReport",
    "SidebandMismatchWarning",
    "zero_point_motion",
    "thermal_occupation",
    "mirror_coupling",
    "intracavity_photons",
    "manyphoton_coupling",
    "cooling_rate",
    "final_occupation",
    "quantum_enabled",
    "detection_efficiency",
    "thermal_force_psd",
    "classify_regimes",
]

TWO_PI = 2.0 * math.pi

Convention = Literal["linear", "bose_einstein"]


class SidebandMismatchWarning(UserWarning):
    """Closed-form cooling rate used away from the Delta = omega_m optimum."""


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = _codata.hbar
    k_B: float = _codata.k
    h: float = _codata.h
    c: float = _codata.c


CONSTANTS = PhysicalConstants()


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


@dataclass(frozen=True)
class MechanicalMode:
    """A damped mechanical oscillator in contact with a thermal bath.

    Attributes:
        omega_m: angular resonance frequency (rad/s).
        gamma_m: angular energy damping rate (rad/s).
        mass: effective mass (kg).
        T_bath: bath temperature (K).
    """

    omega_m: float
    gamma_m: float
    mass: float
    T_bath: float

    def __post_init__(self):
        _require(self.omega_m > 0, f"omega_m must be positive, got {self.omega_m}")
        _require(self.gamma_m > 0, f"gamma_m must be positive, got {self.gamma_m}")
        _require(self.mass > 0, f"mass must be positive, got {self.mass}")
        _require(self.T_bath >= 0, f"T_bath must be non-negative, got {self.T_bath}")

    @property
    def Q_m(self) -> float:
        return self.omega_m / self.gamma_m

    @property
    def spring_constant(self) -> float:
        return self.mass * self.omega_m**2

    @property
    def f_m(self) -> float:
        return self.omega_m / TWO_PI


@dataclass(frozen=True)
class CavityMode:
    """An electromagnetic cavity mode parametrically coupled to the mechanics.

    ``g`` is the frequency pull per unit displacement (rad/s per m);
    ``n_thermal`` is the occupation of the cavity's input bath (normally 0).
    """

    omega_c: float
    gamma: float
    gamma_ext: float
    g: float
    band: Literal["microwave", "optical"] = "optical"
    n_thermal: float = 0.0

    def __post_init__(self):
        _require(self.band in ("microwave", "optical"), f"unknown band {self.band!r}")
        _require(
            0 < self.gamma_ext <= self.gamma,
            f"need 0 < gamma_ext <= gamma, got gamma_ext={self.gamma_ext}, gamma={self.gamma}",
        )
        _require(
            self.omega_c / self.gamma > 10,
            f"omega_c/gamma must exceed 10, got {self.omega_c / self.gamma:.3g}",
        )
        _require(self.n_thermal >= 0, "n_thermal must be non-negative")

    @property
    def gamma_int(self) -> float:
        return self.gamma - self.gamma_ext


@dataclass(frozen=True)
class Drive:
    """Coherent drive of one cavity.

    Exactly one of ``input_power`` (W) and ``n_photons`` (intracavity
    |alpha|^2) must be given.
    """

    detuning: float
    input_power: float | None = None
    n_photons: float | None = None

    def __post_init__(self):
        if (self.input_power is None) == (self.n_photons is None):
            raise ValueError("specify exactly one of input_power and n_photons")
        if self.n_photons is not None:
            _require(self.n_photons >= 0, f"n_photons must be non-negative, got {self.n_photons}")
        if self.input_power is not None:
            _require(self.input_power >= 0, "input_power must be non-negative")

    @property
    def is_red(self) -> bool:
        return self.detuning > 0


@dataclass(frozen=True)
class DetectionChain:
    n_add: float

    def __post_init__(self):
        _require(self.n_add >= 0, f"n_add must be non-negative, got {self.n_add}")

    @property
    def efficiency(self) -> float:
        return detection_efficiency(self)


@dataclass(frozen=True)
class HybridSystem:
    """One mechanical mode shared by one or two driven cavities.

    ``em_signs`` gives the sign of each cavity's interaction term. The
    default is +1 for an optical cavity and -1 for a microwave cavity.
    """

    mech: MechanicalMode
    cavities: tuple[tuple[CavityMode, Drive], ...]
    em_signs: tuple[int, ...] | None = None
    convention: Convention = "linear"

    def __post_init__(self):
        cavities = tuple((c, d) for c, d in self.cavities)
        object.__setattr__(self, "cavities", cavities)
        _require(1 <= len(cavities) <= 2, "need one or two cavities")
        bands = [c.band for c, _ in cavities]
        _require(len(set(bands)) == len(bands), "at most one microwave and one optical cavity")
        if self.em_signs is None:
            signs = tuple(1 if b == "optical" else -1 for b in bands)
        else:
            signs = tuple(int(s) for s in self.em_signs)
            _require(len(signs) == len(cavities), "one em_sign per cavity")
            _require(all(s in (1, -1) for s in signs), "em_signs must be +1 or -1")
        object.__setattr__(self, "em_signs", signs)
        _require(self.convention in ("linear", "bose_einstein"),
                 f"unknown occupation convention {self.convention!r}")

    @property
    def mode_labels(self) -> list[str]:
        return ["mech"] + [c.band for c, _ in self.cavities]

    @property
    def n_bath(self) -> float:
        return thermal_occupation(self.mech, self.convention)

    def couplings(self) -> list[float]:
        """Many-photon coupling rate of each cavity (rad/s)."""
        return [manyphoton_coupling(self.mech, c, d) for c, d in self.cavities]

    def cavity(self, band: str) -> tuple[CavityMode, Drive]:
        for c, d in self.cavities:
            if c.band == band:
                return c, d
        raise KeyError(band)


def zero_point_motion(mech: MechanicalMode) -> float:
    """Ground-state position spread sqrt(hbar / (2 m omega_m)) in meters."""
    if mech.mass <= 0 or mech.omega_m <= 0:
        raise ValueError("mass and omega_m must be positive")
    return math.sqrt(CONSTANTS.hbar / (2.0 * mech.mass * mech.omega_m))


def thermal_occupation(mech: MechanicalMode, convention: Convention = "linear") -> float:
    """Thermal phonon number of the bath.

    ``linear`` is the high-temperature form k_B T / (hbar omega_m);
    ``bose_einstein`` is the exact Planck occupation. Both vanish at T = 0.
    """
    if mech.T_bath == 0:
        return 0.0
    x = CONSTANTS.hbar * mech.omega_m / (CONSTANTS.k_B * mech.T_bath)
    if convention == "linear":
        return 1.0 / x
    if convention == "bose_einstein":
        return 1.0 / math.expm1(x)
    raise ValueError(f"unknown convention {convention!r}")


def mirror_coupling(lambda_opt: float, L: float) -> float:
    """Moving-end-mirror coupling omega_c / L (rad/s per m)."""
    _require(lambda_opt > 0 and L > 0, "wavelength and cavity length must be positive")
    return (TWO_PI * CONSTANTS.c / lambda_opt) / L


def intracavity_photons(cavity: CavityMode, drive: Drive) -> float:
    """Mean intracavity photon number |alpha|^2.

    From input power through the external port:
    (P / hbar omega_0) * gamma_ext / (Delta^2 + (gamma/2)^2), with the drive
    frequency omega_0 = omega_c - Delta.
    """
    if drive.n_photons is not None:
        return float(drive.n_photons)
    omega_0 = cavity.omega_c - drive.detuning
    _require(omega_0 > 0, "drive frequency omega_c - detuning must be positive")
    flux = drive.input_power / (CONSTANTS.hbar * omega_0)
    return flux * cavity.gamma_ext / (drive.detuning**2 + (cavity.gamma / 2.0) ** 2)


def manyphoton_coupling(mech: MechanicalMode, cavity: CavityMode, drive: Drive) -> float:
    """Drive-enhanced coupling g x_zp |alpha| (rad/s)."""
    return cavity.g * zero_point_motion(mech) * math.sqrt(intracavity_photons(cavity, drive))


def cooling_rate(mech: MechanicalMode, cavity: CavityMode, drive: Drive) -> float:
    """Resolved-sideband optical damping 4 Gamma^2 / gamma (rad/s).

    Valid at Delta = omega_m; a :class:`SidebandMismatchWarning` is issued
    when the drive detuning is off that point by more than 1e-6 relative.
    """
    if abs(drive.detuning - mech.omega_m) > 1e-6 * mech.omega_m:
        warnings.warn(
            f"detuning {drive.detuning:.6g} rad/s differs from omega_m {mech.omega_m:.6g} rad/s; "
            "the closed-form cooling rate assumes Delta = omega_m",
            SidebandMismatchWarning,
            stacklevel=2,
        )
    G = manyphoton_coupling(mech, cavity, drive)
    return 4.0 * G**2 / cavity.gamma


def final_occupation(
    mech: MechanicalMode,
    cooling_rate: float,
    model: Literal["ratio", "rate_balance"] = "ratio",
    convention: Convention = "linear",
) -> float:
    """Cooled phonon number.

    ``ratio`` is gamma_m n_bath / Gamma_cool; ``rate_balance`` is
    gamma_m n_bath / (gamma_m + Gamma_cool), which tends to n_bath when the
    cooling rate vanishes.
    """
    n_bath = thermal_occupation(mech, convention)
    if model == "ratio":
        if cooling_rate <= 0:
            raise ValueError("ratio needs a positive cooling rate")
        return mech.gamma_m * n_bath / cooling_rate
    if model == "rate_balance":
        return mech.gamma_m * n_bath / (mech.gamma_m + cooling_rate)
    raise ValueError(f"unknown model {model!r}")


def quantum_enabled(mech: MechanicalMode) -> tuple[bool, float]:
    """Compare the Q-frequency product Q_m f_m with k_B T / h.

    Returns (verdict, threshold in Hz). Ordinary frequency and h are used
    so that the room-temperature threshold comes out as 6.25e12 Hz.
    """
    threshold = CONSTANTS.k_B * mech.T_bath / CONSTANTS.h
    return mech.Q_m * mech.f_m > threshold, threshold


def detection_efficiency(chain: DetectionChain) -> float:
    return 1.0 / (1.0 + 2.0 * chain.n_add)


def thermal_force_psd(mech: MechanicalMode) -> float:
    """One-sided thermal force noise 4 m gamma_m k_B T in N^2/Hz."""
    return 4.0 * mech.mass * mech.gamma_m * CONSTANTS.k_B * mech.T_bath


@dataclass(frozen=True)
class Comparison:
    """A named inequality ``lhs > rhs`` with both sides kept for reporting."""

    name: str
    lhs: float
    rhs: float
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "passed": self.passed}


@dataclass(frozen=True)
class RegimeReport:
    per_cavity: dict[str, dict[str, Comparison]]
    quantum_enabled: Comparison
    Gamma: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "quantum_enabled": self.quantum_enabled.as_dict(),
            "cavities": {
                band: {k: v.as_dict() for k, v in flags.items()}
                for band, flags in self.per_cavity.items()
            },
        }


def classify_regimes(system: HybridSystem) -> RegimeReport:
    """Threshold flags for each cavity and for the mechanics.

    Per cavity: resolved_sideband (omega_m > gamma), strong_coupling
    (Gamma > gamma and Gamma > gamma_m) and bistability_risk
    (Gamma >= omega_m / 2).
    """
    mech = system.mech
    per_cavity = {}
    rates = {}
    for (cav, drive), G in zip(system.cavities, system.couplings()):
        rates[cav.band] = G
        strong_lhs = G
        strong_rhs = max(cav.gamma, mech.gamma_m)
        per_cavity[cav.band] = {
            "resolved_sideband": Comparison(
                "resolved_sideband", mech.omega_m, cav.gamma, mech.omega_m > cav.gamma),
            "strong_coupling": Comparison(
                "strong_coupling", strong_lhs, strong_rhs,
                G > cav.gamma and G > mech.gamma_m),
            "bistability_risk": Comparison(
                "bistability_risk", G, mech.omega_m / 2.0, G >= mech.omega_m / 2.0),
        }
    enabled, threshold = quantum_enabled(mech)
    qe = Comparison("quantum_enabled", mech.Q_m * mech.f_m, threshold, enabled)
    return RegimeReport(per_cavity=per_cavity, quantum_enabled=qe, Gamma=rates)
