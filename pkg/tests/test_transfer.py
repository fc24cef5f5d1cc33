import math

import numpy as np
import pytest
from scipy.linalg import expm

from _systems import transfer_system
from cavitymech import oracle as orc
from cavitymech import transfer as tr
from cavitymech.model import TWO_PI

G = TWO_PI * 1e5
T_STAR = math.pi / (math.sqrt(2.0) * G)


def lossless():
    # model rates must be positive; 1 uHz is lossless on microsecond scales
    return transfer_system()


def protocol(duration=T_STAR, alpha=1.0, GE=G, GO=G, **kw):
    return tr.TransferProtocol(GE, GO, duration, tr.InputState("coherent", alpha), **kw)


# --- swap timing -------------------------------------------------------------------

def test_ideal_swap_time_examples():
    assert tr.ideal_swap_time(G, G) == pytest.approx(3.5355e-6, rel=1e-4)
    assert tr.ideal_swap_time(2 * G, 2 * G) == pytest.approx(T_STAR / 2, rel=1e-14)
    assert abs(tr.chain_amplitude(G, G, T_STAR)) ** 2 == pytest.approx(1.0, abs=1e-12)
    assert tr.chain_amplitude(G, G, T_STAR).real == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(ValueError):
        tr.ideal_swap_time(0.0, G)


def test_chain_amplitude_matches_matrix_exponential():
    M = tr.chain_matrix(G, 1.7 * G, -1, 1)
    for t in (0.3e-6, 2.1e-6, T_STAR):
        ref = expm(-1j * M * t)[2, 0]
        assert tr.chain_amplitude(G, 1.7 * G, t, -1, 1) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("ratio", [0.3, 0.7, 1.9, 4.0])
def test_unequal_rate_swap_time_against_dense_scan(ratio):
    GO = ratio * G
    t_hi = 4 * math.pi / min(G, GO)
    ts = np.linspace(0.0, t_hi, 400001)
    pop = np.abs(tr.chain_amplitude(G, GO, ts)) ** 2
    peaks = np.flatnonzero((pop[1:-1] >= pop[:-2]) & (pop[1:-1] >= pop[2:]) & (pop[1:-1] > 1e-9)) + 1
    t_ref = ts[peaks[0]]
    assert tr.ideal_swap_time(G, GO) == pytest.approx(t_ref, abs=2 * t_hi / 400000)


# --- lossless and limiting cases ---------------------------------------------

@pytest.mark.parametrize("engine", ["gaussian", "oracle"])
def test_lossless_equal_rate_transfer(engine):
    # the smaller oracle amplitude keeps the Fock space at 6^3
    alpha = 1.0 if engine == "gaussian" else 0.5
    r = tr.simulate_transfer(lossless(), protocol(alpha=alpha), engine=engine)
    assert r.fidelity == pytest.approx(1.0, abs=1e-4)
    assert r.efficiency == pytest.approx(1.0, abs=1e-4)
    assert abs(r.added_noise) <= 1e-4

    # with equal signs the chain returns -alpha; only the corrected overlap is 1
    flat = transfer_system(em_signs=(1, 1))
    r = tr.simulate_transfer(flat, protocol(alpha=alpha), engine=engine)
    assert r.fidelity == pytest.approx(1.0, abs=1e-4)
    assert r.raw_fidelity == pytest.approx(math.exp(-4.0 * alpha**2), abs=1e-3)


def test_single_excitation_end_population():
    sysm = lossless()
    spec = orc.FockSpec((2, 2, 2), sysm.mode_labels)
    H = orc.build_hamiltonian(sysm, spec, "rwa_beamsplitter", couplings=[G, G])
    rho0 = orc.DensityOperator.product(spec, {"microwave": orc.fock_ket(2, 1)})
    out = orc.lindblad_evolve(H, [], rho0, [T_STAR], overflow_tol=None)[-1]
    assert orc.expectation(out, orc.number("optical")) == pytest.approx(1.0, abs=1e-6)


def test_zero_em_rate_gives_no_transfer():
    r = tr.simulate_transfer(lossless(), protocol(GE=0.0))
    assert r.efficiency == pytest.approx(0.0, abs=1e-12)
    assert abs(r.added_noise) <= 1e-12


def test_feasibility_examples():
    s = transfer_system(gamma_m=TWO_PI * 10.0, n_bath=100.0, gamma_E=TWO_PI * 1e5, gamma_O=TWO_PI * 1e5)
    assert tr.transfer_feasibility(s, couplings=[TWO_PI * 1e6] * 2).passed
    strong = tr.transfer_feasibility(s, couplings=[TWO_PI * 5e6] * 2)
    assert not strong.passed
    assert any("bistability" in c.name and not c.passed for c in strong.comparisons)
    hot = transfer_system(gamma_m=TWO_PI * 10.0, n_bath=1e6, gamma_E=TWO_PI * 1e5, gamma_O=TWO_PI * 1e5)
    weak = tr.transfer_feasibility(hot, couplings=[TWO_PI * 1e6] * 2)
    assert any("decoherence" in c.name and not c.passed for c in weak.comparisons)


# --- properties -------------------------------------------------------------------

@pytest.mark.parametrize("knob", ["gamma_E", "gamma_O", "decoherence"])
def test_monotone_in_each_loss_channel(knob):
    values = np.linspace(TWO_PI * 1e-6, TWO_PI * 2e4, 5)
    fids, effs = [], []
    for v in values:
        if knob == "decoherence":
            s = transfer_system(gamma_m=TWO_PI * 10.0, n_bath=v / (TWO_PI * 10.0))
        else:
            s = transfer_system(**{knob: v})
        r = tr.simulate_transfer(s, protocol())
        fids.append(r.fidelity)
        effs.append(r.efficiency)
    assert np.all(np.diff(fids) <= 1e-12)
    if knob != "decoherence":
        assert np.all(np.diff(effs) <= 1e-12)
    else:
        # a thermal bath adds noise but leaves the mean amplitude alone (to solver tolerance)
        assert np.ptp(effs) <= 1e-7


def test_two_swaps_return_the_input():
    sysm = lossless()
    spec = orc.FockSpec((6, 6, 6), sysm.mode_labels)
    H = orc.build_hamiltonian(sysm, spec, "rwa_beamsplitter", couplings=[G, G])
    ket = orc.coherent_ket(6, 1.0)
    rho0 = orc.DensityOperator.product(spec, {"microwave": ket})
    out = orc.lindblad_evolve(H, [], rho0, [2 * T_STAR], overflow_tol=None)[-1]
    assert orc.fidelity(np.outer(ket, ket.conj()), out.reduced("microwave")) >= 1 - 1e-3


@pytest.mark.parametrize("rwa", [True, False])
def test_direction_symmetry(rwa):
    a, b = TWO_PI * 3e3, TWO_PI * 9e3
    fwd = tr.simulate_transfer(transfer_system(gamma_m=TWO_PI * 10.0, n_bath=50.0, gamma_E=a, gamma_O=b),
                               protocol(GE=G, GO=1.3 * G, duration=2e-6, direction="EtoO"), rwa=rwa)
    rev = tr.simulate_transfer(transfer_system(gamma_m=TWO_PI * 10.0, n_bath=50.0, gamma_E=b, gamma_O=a),
                               protocol(GE=1.3 * G, GO=G, duration=2e-6, direction="OtoE"), rwa=rwa)
    assert fwd.fidelity == pytest.approx(rev.fidelity, abs=1e-6)
    assert fwd.efficiency == pytest.approx(rev.efficiency, abs=1e-6)


@pytest.mark.parametrize("rwa", [True, False])
def test_em_sign_is_a_phase_convention(rwa):
    kw = dict(gamma_m=TWO_PI * 10.0, n_bath=100.0, gamma_E=TWO_PI * 5e3, gamma_O=TWO_PI * 2e3)
    p = protocol(alpha=0.8 + 0.3j)
    ref = tr.simulate_transfer(transfer_system(em_signs=(1, 1), **kw), p, rwa=rwa)
    flip = tr.simulate_transfer(transfer_system(em_signs=(-1, 1), **kw), p, rwa=rwa)
    for key in ("fidelity", "efficiency", "added_noise"):
        assert getattr(flip, key) == pytest.approx(getattr(ref, key), abs=1e-9)


def test_engines_agree_with_mechanical_decoherence():
    s = transfer_system(gamma_m=TWO_PI * 10.0, n_bath=100.0)
    a = tr.simulate_transfer(s, protocol(), engine="gaussian")
    b = tr.simulate_transfer(s, protocol(), engine="oracle", dims=(6, 8, 8))
    assert a.fidelity == pytest.approx(b.fidelity, rel=0.02)
    assert a.efficiency == pytest.approx(b.efficiency, rel=1e-3)


# --- api ---------------------------------------------------------------------------

def test_gaussian_engine_rejects_fock_input():
    p = tr.TransferProtocol(G, G, T_STAR, tr.InputState("fock", 1))
    with pytest.raises(ValueError, match="oracle"):
        tr.simulate_transfer(lossless(), p)
    r = tr.simulate_transfer(lossless(), p, engine="oracle")
    assert r.fidelity == pytest.approx(1.0, abs=1e-6)


def test_protocol_validation():
    with pytest.raises(ValueError):
        tr.TransferProtocol(-G, G, T_STAR)
    with pytest.raises(ValueError):
        tr.TransferProtocol(G, G, 0.0)
    with pytest.raises(ValueError):
        tr.InputState("fock", 1.5)


def test_result_record():
    r = tr.simulate_transfer(transfer_system(gamma_m=TWO_PI, n_bath=10.0), protocol())
    d = r.as_dict()
    assert {"fidelity", "efficiency", "added_noise", "budget", "engine", "duration_s"} <= set(d)
    assert d["budget"]["mech_decoherence_rad_s"] == pytest.approx(TWO_PI * 10.0)
    assert d["budget"]["Gamma_EM_rad_s"] == G
    assert all(v >= 0 for v in d["budget"].values())
