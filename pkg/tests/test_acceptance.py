"""Acceptance criteria: one PASS/FAIL line each, at the stated tolerances.

Heavy runs are cached in module fixtures and reused by the truncation-hygiene
check. Lines are printed and repeated in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from kerrsel import magnus
from kerrsel.evolve import NoiseParams, evolve_closed, evolve_lindblad
from kerrsel.hilbert import (DrivenHamiltonian, KetLabel, SystemParams, Tone, Truncation, basis_index,
                             basis_ket, build_free_hamiltonian, fig3_params, fig5_params, number_op)
from kerrsel.protocols import (ProtocolSpec, fock4_protocol, fock_ladder_protocol, noon_protocol, pulse,
                               run_protocol)
from kerrsel.spectrum import (bs, degeneracy_map, rabi_frequency, relative_detuning,
                              selectivity_margin, transition_detuning)

P3 = fig3_params()
# high-photon selectivity point: K1/K2 near 1.157, chosen by scanning the worst
# |delta'_rel| / Omega' over a window of 6 around BS(10,12)
HIGH_PHOTON = SystemParams.from_mhz(k1=500.0, k2=432.0, j=0.2, g=0.2)


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def noon_ideal():
    return timed(lambda: run_protocol(noon_protocol(P3), P3, Truncation(6, 6)))


@pytest.fixture(scope="module")
def fock4_ideal():
    return timed(lambda: run_protocol(fock4_protocol(P3), P3, Truncation(8, 5)))


@pytest.fixture(scope="module")
def ladder():
    def go():
        out = {}
        for scale in (1.0, 0.5):
            params = fig5_params(scale)
            for m in (2, 4, 6, 8):
                out[scale, m] = run_protocol(fock_ladder_protocol(params, m), params)
        return out
    return timed(go)


@pytest.fixture(scope="module")
def high_photon():
    spec = ProtocolSpec("bs_10_12", KetLabel(10, 12), (pulse(bs(10, 12)),), ((KetLabel(11, 11), 1.0),))
    return timed(lambda: run_protocol(spec, HIGH_PHOTON, Truncation(25, 25)))


@pytest.fixture(scope="module")
def noon_noisy():
    noise = NoiseParams.from_khz(50.0, 0.02)
    return timed(lambda: run_protocol(noon_protocol(P3), P3, Truncation(5, 5), noise))


def test_c01_noon_fidelity(noon_ideal, acceptance_report):
    res, dt = noon_ideal
    ok = res.final_fidelity >= 0.99 and dt < 60
    acceptance_report(1, "NOON ideal fidelity", ok,
                      f"F={res.final_fidelity:.4f} (need >= 0.99), phase={res.phase:.3f} rad, "
                      f"nmax=({res.sim.trunc.nmax1},{res.sim.trunc.nmax2}), {dt:.1f}s (< 60s)")
    assert ok


def test_c02_fock4_fidelity(fock4_ideal, acceptance_report):
    res, dt = fock4_ideal
    ok = res.final_fidelity >= 0.99 and dt < 60
    acceptance_report(2, "Fock |4,0> ideal fidelity", ok,
                      f"F={res.final_fidelity:.4f} (need >= 0.99), nmax=({res.sim.trunc.nmax1},{res.sim.trunc.nmax2}), "
                      f"{dt:.1f}s (< 60s)")
    assert ok


def _r_squared(x, y):
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    return 1 - np.sum(resid ** 2) / np.sum((y - np.mean(y)) ** 2)


def test_c03_ladder_scaling(ladder, acceptance_report):
    runs, dt = ladder
    ms = np.array([2, 4, 6, 8])
    fids = {k: r.final_fidelity for k, r in runs.items()}
    r2 = {s: _r_squared(ms, np.array([runs[s, m].total_time for m in ms])) for s in (1.0, 0.5)}
    ok = min(fids.values()) > 0.95 and min(r2.values()) > 0.99 and dt < 600
    table = ", ".join(f"s={s} m={m}: {f:.4f}" for (s, m), f in sorted(fids.items()))
    acceptance_report(3, "Fock ladder scaling", ok,
                      f"min F={min(fids.values()):.4f} (need > 0.95) [{table}]; "
                      f"R^2={min(r2.values()):.4f} (need > 0.99); {dt:.1f}s (< 600s)")
    assert ok


def test_c04_high_photon_selectivity(high_photon, acceptance_report):
    res, dt = high_photon
    margin = selectivity_margin(HIGH_PHOTON, bs(10, 12), 6).ratio
    transfer = res.final_fidelity
    leak = res.sim.population((9, 13))[-1] + res.sim.population((12, 10))[-1]
    ok = margin >= 20 and transfer > 0.99 and leak < 0.005 and dt < 300
    acceptance_report(4, "high-photon BS(10,12) selectivity", ok,
                      f"margin={margin:.1f} (>= 20), transfer={transfer:.5f} (> 0.99), "
                      f"leakage={leak:.2e} (< 5e-3), {dt:.1f}s (< 300s)")
    assert ok


def test_c05_noisy_noon(noon_noisy, acceptance_report):
    res, dt = noon_noisy
    ok = res.peak_fidelity > 0.95 and dt < 600
    acceptance_report(5, "NOON under loss (50 kHz, n_th 0.02)", ok,
                      f"peak F={res.peak_fidelity:.4f} (need > 0.95), {dt:.1f}s (< 600s)")
    assert ok


def test_c06_lindblad_oracles(acceptance_report):
    zero = SystemParams(0, 0, 0, 0)
    kap = 2 * math.pi * 0.05
    trunc = Truncation(2, 1)
    decay = evolve_lindblad(DrivenHamiltonian(zero, trunc), basis_ket((1, 0), trunc), NoiseParams(kappa1=kap),
                            (0, 5 / kap), trunc=trunc, sample_dt=0.1 / kap, rtol=1e-10, atol=1e-12)
    err_decay = np.max(np.abs(decay.population((1, 0)) - np.exp(-kap * decay.times)))
    trunc = Truncation(10, 8)
    noise = NoiseParams(kappa1=kap, kappa2=2 * kap, nth1=0.1, nth2=0.05)
    thermal = evolve_lindblad(DrivenHamiltonian(zero, trunc), basis_ket((0, 0), trunc), noise, (0, 30 / kap),
                              trunc=trunc, sample_dt=5 / kap, rtol=1e-10, atol=1e-12)
    err_nth = max(abs(np.trace(number_op(mode, trunc) @ thermal.final_state).real - nth)
                  for mode, nth in ((1, 0.1), (2, 0.05)))
    ok = err_decay < 1e-6 and err_nth < 1e-4
    acceptance_report(6, "Lindblad oracles", ok,
                      f"decay err={err_decay:.1e} (< 1e-6), thermal err={err_nth:.1e} (< 1e-4)")
    assert ok


def test_c07_magnus_consistency(acceptance_report):
    trunc, target = Truncation(6, 6), bs(1, 1)
    i, f = basis_index(target.initial, trunc), basis_index(target.final, trunc)
    devs, ratios = [], []
    for k_over_j in (10, 15, 30):
        p = SystemParams.from_mhz(k1=20.0 * k_over_j, k2=20.0 * k_over_j / math.sqrt(2), j=20.0, g=20.0)
        om = magnus.resonant_block(p, target)
        w = magnus.compensated_drive_frequency(p, target, trunc)
        t_pi = math.pi / (2 * om)
        sim = evolve_closed(DrivenHamiltonian(p, trunc, [Tone("bs", p.j, w)]), basis_ket(target.initial, trunc),
                            (0, t_pi), trunc=trunc, sample_dt=t_pi / 400)
        pf, pi_ = sim.all_populations[:, f], sim.all_populations[:, i]
        devs.append(np.max(np.abs(pf - np.sin(om * sim.times) ** 2)))
        ratios.append(np.mean(1 - pf - pi_) / magnus.leakage_probability(p, target, trunc))
    ok = max(devs) < 1e-2 and all(0.5 <= r <= 2 for r in ratios)
    acceptance_report(7, "Magnus two-level consistency", ok,
                      f"max |dP|={max(devs):.2e} (< 1e-2); observed/estimated leakage="
                      f"{', '.join(f'{r:.2f}' for r in ratios)} (within x2) for K1/J=10,15,30")
    assert ok


def test_c08_stark_oracle(acceptance_report):
    # the N=2 manifold {|0,2>, |1,1>, |2,0>} is closed under BS coupling: an exact
    # three-level problem with one resonant pair and one spectator
    rng = np.random.default_rng(2024)
    trunc = Truncation(2, 2)
    manifold = [(0, 2), (1, 1), (2, 0)]
    idx = [basis_index(l, trunc) for l in manifold]
    worst = 0.0
    for _ in range(200):
        target, spectator = (bs(1, 1), bs(0, 2)) if rng.random() < 0.5 else (bs(0, 2), bs(1, 1))
        k1 = rng.uniform(100, 1000)
        k2 = k1 / rng.uniform(1.1, 3.0)
        k12 = rng.uniform(-20, 20)
        delta = abs(relative_detuning(SystemParams.from_mhz(k1, k2, 1, 1, k12), target, spectator))
        j = rng.uniform(0.005, 0.1) * delta / math.sqrt(2)
        p = SystemParams(k1=2 * math.pi * k1, k2=2 * math.pi * k2, j=j, g=j, k12=2 * math.pi * k12)
        x = rabi_frequency(p, spectator) / delta
        h = DrivenHamiltonian(p, trunc, [Tone("bs", p.j, transition_detuning(p, target))])
        gen = h.static_generator(h.frame_rates())[np.ix_(idx, idx)]
        pair = [manifold.index(tuple(target.initial)), manifold.index(tuple(target.final))]
        lam, vec = np.linalg.eigh(gen)
        dressed = np.argsort((np.abs(vec[pair, :]) ** 2).sum(axis=0))[-2:]
        exact = lam[dressed].sum() - gen[pair[0], pair[0]].real - gen[pair[1], pair[1]].real
        shifts = magnus.stark_shift_second_order(p, target, trunc)
        predicted = shifts[target.initial] + shifts[target.final]
        worst = max(worst, abs(exact - predicted) / abs(predicted) / (5 * x ** 2))
    ok = worst < 1
    acceptance_report(8, "Stark-shift oracle", ok,
                      f"max rel err / (5 (v/Delta)^2) = {worst:.3f} (< 1) over 200 instances")
    assert ok


def _brute_force_zeros(params, target, window, tol):
    """Offsets whose BS transition energy equals the target's, from the free-Hamiltonian diagonal."""
    n_hi, m_hi = target.n0 + window + 1, target.m0 + window
    trunc = Truncation(n_hi, m_hi)
    e = build_free_hamiltonian(params, trunc).diagonal().real

    def freq(n, m):
        return e[basis_index((n + 1, m - 1), trunc)] - e[basis_index((n, m), trunc)]
    ref = freq(target.n0, target.m0)
    out = set()
    for dn in range(-window, window + 1):
        for dm in range(-window, window + 1):
            n, m = target.n0 + dn, target.m0 + dm
            if (dn, dm) != (0, 0) and n >= 0 and m >= 1 and abs(freq(n, m) - ref) <= tol:
                out.add((dn, dm))
    return out


def test_c09_degeneracy_structure(acceptance_report):
    target, window = bs(10, 12), 10
    details, ok = [], True
    for p_, q_ in ((2, 1), (3, 2), (7, 5)):
        params = SystemParams.from_mhz(k1=300.0, k2=300.0 * q_ / p_, j=20, g=20)
        dm = degeneracy_map(params, target, window)
        family = {(k * q_, k * p_) for k in range(-window, window + 1)
                  if k and abs(k * q_) <= window and abs(k * p_) <= window}
        found = set(dm.zeros())
        brute = _brute_force_zeros(params, target, window, dm.tol)
        ok &= found == family == brute
        details.append(f"{p_}/{q_}: {sorted(z for z in found if z[0] > 0)}")
    params = SystemParams.from_mhz(k1=300.0, k2=300.0 / math.sqrt(3), j=20, g=20)
    dm = degeneracy_map(params, target, window)
    ok &= dm.zeros() == [] and not _brute_force_zeros(params, target, window, dm.tol)
    details.append(f"sqrt3: none, min |delta'| = {dm.min_off_target() / (2 * math.pi):.2f} MHz")
    acceptance_report(9, "degeneracy structure", ok, "; ".join(details))
    assert ok


def test_c10_truncation_hygiene(noon_ideal, fock4_ideal, ladder, high_photon, noon_noisy,
                                acceptance_report):
    runs = {"noon": noon_ideal[0], "fock4": fock4_ideal[0], "high-photon": high_photon[0],
            "noon-noisy": noon_noisy[0]}
    runs.update({f"ladder s={s} m={m}": r for (s, m), r in ladder[0].items()})
    comm = max(r.sim.diagnostics["commutator_error"] for r in runs.values())
    edge = max(r.sim.diagnostics["max_edge_population"] for r in runs.values())
    ok = comm < 1e-4 and edge < 1e-6
    acceptance_report(10, "truncation hygiene", ok,
                      f"max commutator error={comm:.1e} (< 1e-4), max edge population={edge:.1e} "
                      f"(< 1e-6) over {len(runs)} gating runs")
    assert ok
