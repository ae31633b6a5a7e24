import math
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kerrsel.hilbert import SystemParams, Truncation, basis_index, build_free_hamiltonian, fig3_params, mhz
from kerrsel.spectrum import (MAP_SCHEMA, DegeneracyError, Kind, Transition, best_rational_approximations,
                              bs, degeneracy_map, enumerate_transitions, linear_independence_witness,
                              rabi_frequency, relative_detuning, selectivity_margin, tms,
                              transition_detuning)

kerr = st.floats(-800, 800, allow_nan=False)


def params_with_ratio(ratio, k1=300.0, j=20.0):
    return SystemParams.from_mhz(k1=k1, k2=k1 / ratio, j=j, g=j)


def test_transition_labels():
    tr = bs(10, 12)
    assert (tr.initial, tr.final) == ((10, 12), (11, 11))
    assert tms(0, 0).final == (1, 1)
    assert Transition.parse(str(tr)) == tr and Transition.parse("tms(2,0)") == tms(2, 0)
    with pytest.raises(ValueError):
        bs(1, 0)
    with pytest.raises(ValueError):
        tms(-1, 0)


def test_detuning_examples():
    p = fig3_params()
    assert transition_detuning(p, bs(10, 12)) == pytest.approx(mhz(3000 - 11 * 300 / math.sqrt(2)))
    assert transition_detuning(p, bs(10, 12)) == pytest.approx(mhz(666.5476), rel=1e-6)
    assert transition_detuning(SystemParams(0, 0, 1, 1), tms(0, 0)) == 0
    assert rabi_frequency(p, bs(1, 1)) == pytest.approx(mhz(20 * math.sqrt(2)))
    assert rabi_frequency(p, tms(0, 0)) == pytest.approx(mhz(20))
    assert rabi_frequency(p, bs(10, 12)) == pytest.approx(p.j * math.sqrt(132))
    assert relative_detuning(p, bs(10, 12), bs(9, 13)) == pytest.approx(mhz(-300 - 300 / math.sqrt(2)))
    assert relative_detuning(p, bs(3, 3), bs(3, 3)) == 0
    with pytest.raises(ValueError):
        relative_detuning(p, bs(1, 1), tms(1, 1))


@settings(max_examples=40)
@given(kerr, kerr, st.floats(-60, 60), st.floats(-100, 100), st.floats(-100, 100))
def test_detuning_matches_free_hamiltonian(k1, k2, k12, w1, w2):
    p = SystemParams.from_mhz(k1=k1, k2=k2, j=1, g=1, k12=k12, omega1=w1, omega2=w2)
    trunc = Truncation(5, 5)
    e = build_free_hamiltonian(p, trunc).diagonal().real
    scale = max(1.0, *(abs(x) for x in (p.k1, p.k2, p.k12, p.omega1, p.omega2)))
    for tr in enumerate_transitions(trunc):
        gap = e[basis_index(tr.final, trunc)] - e[basis_index(tr.initial, trunc)]
        assert transition_detuning(p, tr) == pytest.approx(gap, abs=1e-10 * scale * 50)
        ref = bs(2, 2) if tr.kind is Kind.BS else tms(2, 2)
        assert relative_detuning(p, ref, tr) == pytest.approx(
            transition_detuning(p, tr) - transition_detuning(p, ref), abs=1e-10 * scale * 50)


@given(kerr, kerr, st.integers(0, 8), st.integers(1, 8), st.integers(0, 8), st.integers(1, 8))
def test_relative_detuning_antisymmetric(k1, k2, n, m, n2, m2):
    p = SystemParams.from_mhz(k1=k1, k2=k2, j=1, g=1)
    a, b = bs(n, m), bs(n2, m2)
    assert relative_detuning(p, a, b) == pytest.approx(-relative_detuning(p, b, a), abs=1e-9)


@pytest.mark.parametrize("p, q", [(2, 1), (3, 2), (7, 5), (5, 3)])
def test_rational_ratio_zero_family(p, q):
    dm = degeneracy_map(params_with_ratio(p / q), bs(10, 12), 10)
    zeros = set(dm.zeros())
    expected = {(k * q, k * p) for k in range(-10, 11) if k and abs(k * q) <= 10 and abs(k * p) <= 10}
    assert zeros == expected


def test_degeneracy_map_examples(tmp_path):
    dm = degeneracy_map(params_with_ratio(2), bs(10, 12), 5)
    assert set(dm.zeros()) == {(1, 2), (2, 4), (-1, -2), (-2, -4)}
    assert dm.delta_rel[list(dm.n_values).index(10), list(dm.m_values).index(12)] == 0
    assert degeneracy_map(params_with_ratio(7 / 5), bs(10, 12), 4).zeros() == []
    assert degeneracy_map(params_with_ratio(math.sqrt(3)), bs(10, 12), 10).min_off_target() > 0
    path = tmp_path / "map.csv"
    dm.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == MAP_SCHEMA
    assert lines[1] == "n_prime,m_prime,delta_rel_MHz,rabi_MHz,ratio"


def test_degeneracy_map_clips_window():
    dm = degeneracy_map(fig3_params(), bs(1, 1), 3)
    cells = [(n, m) for n, m, _, _ in dm.entries()]
    assert min(n for n, _ in cells) == 0 and min(m for _, m in cells) == 1
    assert np.isnan(dm.delta_rel[0, 0])


def test_selectivity_margin_examples():
    assert selectivity_margin(SystemParams.from_mhz(300, 200, 0, 0), bs(2, 2), 3).ratio == math.inf
    assert selectivity_margin(params_with_ratio(2), bs(10, 12), 2).ratio == 0
    p = fig3_params()
    sel = selectivity_margin(p, bs(1, 1), 6)
    # exhaustive oracle over the same window, same kind
    brute = min(abs(relative_detuning(p, bs(1, 1), bs(n, m))) / rabi_frequency(p, bs(n, m))
                for n in range(0, 8) for m in range(1, 8) if (n, m) != (1, 1))
    assert sel.ratio == pytest.approx(brute)
    assert math.isfinite(sel.ratio) and sel.worst is not None
    # the pair-creation channel TMS(1,0) sits at the same frequency as BS(1,1) in this frame
    assert tms(1, 0) in sel.tms_flagged
    assert selectivity_margin(p, bs(1, 1), 6, include_cross=True).ratio == 0


@settings(max_examples=25)
@given(st.floats(0.1, 10))
def test_selectivity_scaling_covariance(s):
    p = SystemParams.from_mhz(k1=300, k2=190, j=5, g=5, k12=7)
    q = SystemParams.from_mhz(k1=300 * s, k2=190 * s, j=5 * s, g=5 * s, k12=7 * s)
    a, b = selectivity_margin(p, bs(4, 5), 4), selectivity_margin(q, bs(4, 5), 4)
    assert a.worst == b.worst
    assert a.ratio == pytest.approx(b.ratio, rel=1e-9)


def test_convergents():
    assert [(w.p, w.q) for w in best_rational_approximations(math.sqrt(2), 12)] == \
        [(1, 1), (3, 2), (7, 5), (17, 12)]
    w = best_rational_approximations(2.0, 5)
    assert [(x.p, x.q, x.error) for x in w] == [(2, 1, 0.0)]
    assert w[0].first_degeneracy == (1, 2)
    phi = (1 + math.sqrt(5)) / 2
    fib = [(w.p, w.q) for w in best_rational_approximations(phi, 13)]
    assert fib == [(1, 1), (2, 1), (3, 2), (5, 3), (8, 5), (13, 8), (21, 13)]
    errs = {w.q: w.error for w in best_rational_approximations(phi, 13)}
    root2 = {w.q: w.error for w in best_rational_approximations(math.sqrt(2), 12)}
    assert errs[5] > root2[5] and errs[2] > root2[2]
    with pytest.raises(ValueError):
        best_rational_approximations(float("inf"), 5)


@given(st.floats(0.05, 20), st.integers(1, 200))
def test_convergents_are_best_approximations(x, max_q):
    ws = best_rational_approximations(x, max_q)
    assert ws and [w.q for w in ws] == sorted(w.q for w in ws)
    for w in ws:
        assert math.gcd(w.p, w.q) == 1 and 1 <= w.q <= max_q
        # best approximation of the second kind: no smaller denominator does better
        for q in range(1, w.q):
            assert abs(q * x - round(q * x)) >= abs(w.q * x - w.p) - 1e-12
    assert all(w.error == pytest.approx(abs(x - w.p / w.q)) for w in ws)


def test_linear_independence_witness():
    assert linear_independence_witness(3, 5, 2, 5) == (1, 1, -4)
    assert linear_independence_witness(1.0, 2.0, 0.0, 2) == (2, -1, 1)
    s = 123.0
    assert linear_independence_witness(s, s * math.sqrt(2), s * math.sqrt(3), 10) is None
    with pytest.raises(ValueError):
        linear_independence_witness(1, 1, 1, 0)


def test_degeneracy_error_carries_transition():
    err = DegeneracyError("x", bs(1, 1))
    assert err.transition == bs(1, 1) and isinstance(err, ValueError)
