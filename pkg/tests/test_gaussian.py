import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm, sqrtm

from _systems import WM, cooling_system, mech, rng, transfer_system
from cavitymech import gaussian as gs
from cavitymech import oracle as orc
from cavitymech.model import (
    CONSTANTS,
    TWO_PI,
    cooling_rate,
    final_occupation,
    thermal_force_psd,
)


def assert_physical(state):
    V = state.cov
    assert np.max(np.abs(V - V.T)) <= 1e-12 * max(1.0, np.abs(V).max())
    assert gs.symplectic_eigenvalues(V).min() >= 0.5 - 1e-9


# --- state type -------------------------------------------------------------

def test_state_validation():
    gs.GaussianState(np.zeros(2), 0.5 * np.eye(2))
    with pytest.raises(ValueError):
        gs.GaussianState(np.zeros(2), 0.4 * np.eye(2))
    with pytest.raises(ValueError):
        gs.GaussianState(np.zeros(2), np.array([[1.0, 0.2], [0.1, 1.0]]))
    # squeezed by e^-1, still physical
    gs.GaussianState(np.zeros(2), 0.5 * np.diag([math.exp(-1), math.exp(1)]))


def test_phonon_number_examples():
    assert gs.phonon_number(gs.GaussianState.vacuum(1), 0) == pytest.approx(0.0, abs=1e-15)
    assert gs.phonon_number(gs.GaussianState.thermal([3.25]), 0) == pytest.approx(3.25)
    with pytest.raises(IndexError):
        gs.phonon_number(gs.GaussianState.vacuum(1), 2)


# --- linearization ------------------------------------------------------------

def test_decoupled_drift_is_block_diagonal():
    model = gs.linearize(cooling_system(G=0.0))
    A = model.drift
    assert np.all(A[0:2, 2:4] == 0) and np.all(A[2:4, 0:2] == 0)
    s = cooling_system(G=0.0)
    assert A[0, 1] == pytest.approx(s.mech.omega_m)
    assert A[0, 0] == pytest.approx(-s.mech.gamma_m / 2)


def _complex_generator(A):
    """Complex matrix K with da/dt = K a for a phase-covariant real drift."""
    n = A.shape[0] // 2
    K = np.zeros((n, n), complex)
    for j in range(n):
        for k in range(n):
            blk = A[2 * j:2 * j + 2, 2 * k:2 * k + 2]
            assert blk[0, 0] == pytest.approx(blk[1, 1]) and blk[0, 1] == pytest.approx(-blk[1, 0])
            K[j, k] = blk[0, 0] - 1j * blk[0, 1]
    return K


def test_rwa_single_excitation_sector_is_the_chain():
    G = TWO_PI * 1e5
    s = transfer_system(em_signs=(1, 1))
    model = gs.linearize(s, rwa=True, couplings=[G, G])
    K = _complex_generator(model.drift)
    M = 1j * (K - np.diag(np.diag(K).real))  # drop damping, K = -i M
    # mode order (mech, E, O); chain order (E, mech, O)
    perm = [1, 0, 2]
    chain = np.array([[0, G, 0], [G, 0, G], [0, G, 0]])
    assert np.allclose(M[np.ix_(perm, perm)].real, chain, atol=1e-9 * G)
    assert np.allclose(M.imag, 0, atol=1e-9 * G)


def test_rwa_rejects_far_detuning():
    with pytest.raises(ValueError):
        gs.linearize(cooling_system(detuning=1.2 * WM), rwa=True)


def test_diffusion_positive_semidefinite():
    model = gs.linearize(transfer_system(gamma_m=TWO_PI * 10, n_bath=50.0))
    assert np.allclose(model.diffusion, model.diffusion.T)
    assert np.linalg.eigvalsh(model.diffusion).min() >= 0


def test_stability_sweep():
    r = rng(1)
    for _ in range(1000):
        ratio = r.uniform(0.0, 0.499)
        gamma = WM * 10 ** r.uniform(-3, 0.5)
        gm = WM * 10 ** r.uniform(-7, -4)
        s = cooling_system(G=ratio * WM, gamma=gamma, gamma_m=gm, n_bath=10 ** r.uniform(0, 3))
        ev = gs.linearize(s).eigenvalues()
        assert ev.real.max() <= 0


# --- steady state -------------------------------------------------------------

def test_decoupled_steady_state_blocks():
    s = cooling_system(G=0.0, n_bath=37.0)
    V = gs.steady_state(gs.linearize(s)).cov
    assert np.allclose(np.diag(V)[:2], 37.5, rtol=1e-10)
    assert np.allclose(np.diag(V)[2:], 0.5, rtol=1e-10)


def test_lyapunov_residual_within_bound():
    model = gs.linearize(cooling_system())
    V = gs.steady_state(model).cov
    res = gs.lyapunov_residual(model, V)
    assert res <= gs.residual_bound(model, V)
    # moderate-Q case meets the plain relative bound as well
    m2 = gs.linearize(cooling_system(gamma_m=TWO_PI * 1e4, n_bath=1.0, gamma=TWO_PI * 1e6,
                                     G=TWO_PI * 1e5))
    V2 = gs.steady_state(m2).cov
    assert gs.lyapunov_residual(m2, V2) <= 1e-10 * np.linalg.norm(m2.diffusion)


def test_unstable_drift_raises_with_eigenvalue():
    s = cooling_system(G=TWO_PI * 2e5, detuning=-WM)
    model = gs.linearize(s)
    assert not model.is_hurwitz()
    with pytest.raises(gs.InstabilityError, match="eigenvalue"):
        gs.steady_state(model)


def test_cooling_steady_state_matches_rate_balance():
    s = cooling_system(G=TWO_PI * 1e4, gamma=TWO_PI * 1e5)
    n = gs.phonon_number(gs.steady_state(gs.linearize(s)), 0)
    cav, drive = s.cavities[0]
    closed = final_occupation(s.mech, cooling_rate(s.mech, cav, drive), "rate_balance")
    assert n == pytest.approx(closed, rel=0.05)


def test_random_rate_balance_sweep():
    r = rng(2)
    for _ in range(100):
        wm = TWO_PI * r.uniform(1e6, 1e7)
        gamma = wm / 10 ** r.uniform(math.log10(20), 3)
        G = gamma / 10 ** r.uniform(1, 2)
        rate = 4 * G**2 / gamma
        gm = rate / 10 ** r.uniform(1, 3)
        s = cooling_system(G=G, gamma=gamma, gamma_m=gm, omega_m=wm, n_bath=10 ** r.uniform(1, 4))
        n = gs.phonon_number(gs.steady_state(gs.linearize(s)), 0)
        closed = gm * s.n_bath / (gm + rate)
        assert n == pytest.approx(closed, rel=0.05)


def test_rwa_and_full_models_agree():
    r = rng(3)
    for _ in range(20):
        gamma = WM / 10 ** r.uniform(math.log10(50), 3)
        G = WM / 10 ** r.uniform(math.log10(50), 3)
        s = cooling_system(G=G, gamma=gamma, gamma_m=TWO_PI * 10.0, n_bath=100.0)
        full = gs.phonon_number(gs.steady_state(gs.linearize(s, rwa=False)), 0)
        rwa = gs.phonon_number(gs.steady_state(gs.linearize(s, rwa=True)), 0)
        assert rwa == pytest.approx(full, rel=0.10)


def test_squeezed_steady_state_is_accepted():
    # blue side, weak drive: the cavity quadratures are ponderomotively squeezed
    s = cooling_system(G=WM * 4e-5, detuning=-0.1 * WM, gamma=TWO_PI * 1e5)
    state = gs.steady_state(gs.linearize(s))
    assert_physical(state)


# --- evolution ------------------------------------------------------------------

def test_evolve_returns_initial_state_at_zero():
    model = gs.linearize(cooling_system())
    s0 = gs.GaussianState.thermal([5.0, 0.0]).displaced(0, 0.3 + 0.1j)
    for method in ("rk", "expm"):
        out = gs.evolve(model, s0, [0.0, 1e-7], method=method)
        assert out[0] is s0


def test_closed_system_preserves_symplectic_spectrum():
    A = np.zeros((4, 4))
    A[0, 1], A[1, 0] = 1.0, -1.0
    A[2, 3], A[3, 2] = 2.0, -2.0
    # passive mode mixing: skew-symmetric and commuting with the symplectic form
    A[0, 2], A[2, 0] = 0.3, -0.3
    A[1, 3], A[3, 1] = 0.3, -0.3
    model = gs.LinearModel(A, np.zeros((4, 4)), ("a", "b"))
    V0 = np.diag([1.5, 1.5, 0.5 * math.exp(-0.8), 0.5 * math.exp(0.8)])
    s0 = gs.GaussianState(np.zeros(4), V0)
    nu0 = np.sort(gs.symplectic_eigenvalues(V0))
    for st_ in gs.evolve(model, s0, np.linspace(0, 20, 11), rtol=1e-11)[1:]:
        assert np.allclose(np.sort(gs.symplectic_eigenvalues(st_.cov)), nu0, rtol=1e-8)


def test_long_time_limit_approaches_steady_state():
    s = cooling_system(G=TWO_PI * 2e5, gamma=TWO_PI * 2e6, gamma_m=TWO_PI * 2e5, n_bath=5.0)
    model = gs.linearize(s)
    Vss = gs.steady_state(model).cov
    s0 = gs.GaussianState.vacuum(2)
    slowest = -model.eigenvalues().real.max()
    t_end = 40.0 / slowest
    for method in ("expm", "rk"):
        V = gs.evolve(model, s0, [t_end], method=method)[-1].cov
        assert np.linalg.norm(V - Vss) <= 1e-6 * max(1.0, np.linalg.norm(Vss))


def test_rk_and_expm_agree():
    model = gs.linearize(transfer_system(gamma_m=TWO_PI * 10, n_bath=20.0), rwa=True,
                         couplings=[TWO_PI * 1e5] * 2)
    s0 = gs.GaussianState.vacuum(3).displaced(1, 1.0)
    t = [1e-6, 3e-6]
    a = gs.evolve(model, s0, t, method="rk", rtol=1e-10)
    b = gs.evolve(model, s0, t, method="expm")
    for x, y in zip(a, b):
        assert np.allclose(x.cov, y.cov, atol=1e-8)
        assert np.allclose(x.mean, y.mean, atol=1e-8)
        assert_physical(x)


def test_bad_time_grid():
    model = gs.linearize(cooling_system())
    with pytest.raises(ValueError):
        gs.evolve(model, gs.GaussianState.vacuum(2), [1.0, 0.5])
    with pytest.raises(ValueError):
        gs.evolve(model, gs.GaussianState.vacuum(2), [-1.0])


def test_thermalization_is_monotone():
    r = rng(4)
    m = mech(n_bath=10.0, gamma_m=1.0, omega_m=50.0)
    A = np.array([[-m.gamma_m / 2, m.omega_m], [-m.omega_m, -m.gamma_m / 2]])
    D = m.gamma_m * 10.5 * np.eye(2)
    model = gs.LinearModel(A, D, ("mech",))
    t = np.linspace(0, 10, 60)
    for _ in range(20):
        n0 = r.uniform(0, 40)
        out = gs.evolve(model, gs.GaussianState.thermal([n0]), t, method="expm")
        n = np.array([gs.phonon_number(s, 0) for s in out])
        gap = np.abs(n - 10.0)
        assert np.all(np.diff(gap) <= 1e-10)


def test_linearization_warning():
    s = cooling_system(gamma_m=TWO_PI * 1e4, n_bath=1e4)
    with pytest.warns(gs.LinearizationWarning):
        gs.linearize(s)


# --- fidelity ------------------------------------------------------------------------

def _random_fock_gaussian(r, dim):
    """Displaced squeezed thermal state in a truncated Fock basis."""
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    n = r.uniform(0, 0.4)
    zeta = r.uniform(0, 0.35) * np.exp(1j * r.uniform(0, 2 * np.pi))
    alpha = r.uniform(0, 1.2) * np.exp(1j * r.uniform(0, 2 * np.pi))
    S = expm(0.5 * (np.conj(zeta) * a @ a - zeta * a.conj().T @ a.conj().T))
    Dp = expm(alpha * a.conj().T - np.conj(alpha) * a)
    rho = Dp @ S @ orc.thermal_matrix(dim, n) @ S.conj().T @ Dp.conj().T
    return rho / np.trace(rho).real, a


def _moments(rho, a):
    q = (a + a.conj().T) / math.sqrt(2)
    p = (a - a.conj().T) / (1j * math.sqrt(2))
    mean = np.array([np.trace(rho @ q).real, np.trace(rho @ p).real])
    ops = [q - mean[0] * np.eye(len(a)), p - mean[1] * np.eye(len(a))]
    V = np.array([[0.5 * np.trace(rho @ (x @ y + y @ x)).real for y in ops] for x in ops])
    return gs.GaussianState(mean, V)


def test_gaussian_fidelity_against_uhlmann():
    r = rng(5)
    big = 90
    keep = 60
    for _ in range(50):
        rho1, a = _random_fock_gaussian(r, big)
        rho2, _ = _random_fock_gaussian(r, big)
        s1, s2 = _moments(rho1, a), _moments(rho2, a)
        sub1 = rho1[:keep, :keep] / np.trace(rho1[:keep, :keep]).real
        sub2 = rho2[:keep, :keep] / np.trace(rho2[:keep, :keep]).real
        f_orc = orc.fidelity(sub1, sub2)
        assert gs.gaussian_fidelity(s1, s2) == pytest.approx(f_orc, abs=1e-3)


def test_gaussian_fidelity_identities():
    s = gs.GaussianState.thermal([0.7]).displaced(0, 0.4)
    assert gs.gaussian_fidelity(s, s) == pytest.approx(1.0, abs=1e-12)
    a, b = gs.GaussianState.vacuum(1).displaced(0, 0.5), gs.GaussianState.vacuum(1).displaced(0, -0.3j)
    assert gs.gaussian_fidelity(a, b) == pytest.approx(math.exp(-abs(0.5 + 0.3j) ** 2), rel=1e-12)


def test_uhlmann_reference_by_scipy():
    # independent route: scipy matrix square roots
    r = rng(6)
    rho1, a = _random_fock_gaussian(r, 40)
    rho2, _ = _random_fock_gaussian(r, 40)
    s = sqrtm(rho1)
    expected = np.trace(sqrtm(s @ rho2 @ s)).real ** 2
    assert orc.fidelity(rho1, rho2) == pytest.approx(expected, abs=1e-8)


# --- spectra ---------------------------------------------------------------------------

@pytest.mark.parametrize("q", [100.0, 1e3, 1e5])
def test_equipartition(q):
    m = mech(n_bath=1e3, gamma_m=WM / q)
    f0, width = m.f_m, m.gamma_m / TWO_PI
    S = lambda f: float(gs.displacement_psd(m, f))
    pts = [f0 - 50 * width, f0 - width, f0, f0 + width, f0 + 50 * width]
    total = quad(S, 0, pts[0], limit=400)[0]
    for lo, hi in zip(pts[:-1], pts[1:]):
        total += quad(S, lo, hi, limit=400)[0]
    total += quad(S, pts[-1], np.inf, limit=400)[0]
    assert total == pytest.approx(CONSTANTS.k_B * m.T_bath / (m.mass * m.omega_m**2), rel=0.01)


def test_spectrum_peak_and_floor():
    m = mech(n_bath=100.0, gamma_m=TWO_PI * 100.0)
    peak = float(gs.displacement_psd(m, m.f_m))
    assert peak == pytest.approx(thermal_force_psd(m) / (m.mass**2 * m.gamma_m**2 * m.omega_m**2), rel=1e-12)
    floor = 1e-30
    # the Lorentzian wing drops below the floor at |w^2 - wm^2| = sqrt(S_F / (m^2 floor)) (gamma_m w small)
    dw2 = math.sqrt(thermal_force_psd(m) / (m.mass**2 * floor))
    f_cross = math.sqrt(m.omega_m**2 + dw2) / TWO_PI
    gap = f_cross - m.f_m
    probes = [f_cross - 0.01 * gap, f_cross + 0.01 * gap, m.f_m + 10 * gap]
    series = gs.displacement_spectrum(m, None, probes, floor)
    thermal = gs.displacement_psd(m, series.freq_Hz)
    assert thermal[0] > floor and thermal[1] < floor and thermal[2] < 0.1 * floor
    assert np.allclose(series.S_x, thermal + floor)
    assert series.to_csv().splitlines()[0] == "freq_Hz,S_x_m2_per_Hz"
    with pytest.raises(ValueError):
        gs.displacement_spectrum(m, None, [0.0, 1.0])


@settings(max_examples=40, deadline=None)
@given(ratio=st.floats(0.0, 0.45), gam=st.floats(1e-3, 1.0), nb=st.floats(0.0, 1e3),
       det=st.floats(0.9, 1.1))
def test_steady_states_are_physical(ratio, gam, nb, det):
    s = cooling_system(G=ratio * WM, gamma=gam * WM, n_bath=nb, gamma_m=TWO_PI * 10.0,
                       detuning=det * WM)
    model = gs.linearize(s)
    if model.is_hurwitz():
        assert_physical(gs.steady_state(model))
