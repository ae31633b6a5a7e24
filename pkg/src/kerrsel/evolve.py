"""Schrodinger and Lindblad time evolution plus state diagnostics.

Both integrators use an adaptive Runge-Kutta scheme (DOP853) with dense
output for sampling. When the Hamiltonian exposes its diagonal free energies
(``DrivenHamiltonian``) the equations are integrated in the interaction
picture of that diagonal, which removes the fast Kerr phases; samples are
always reported in the Schrodinger picture.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp, trapezoid

from .hilbert import (KetLabel, Truncation, basis_index, commutator_truncation_error,
                      edge_population, ladder_op)

SIMRESULT_SCHEMA = "# kerrsel simresult v1"
WIGNER_SCHEMA = "# kerrsel wigner v1"


class EvolutionError(RuntimeError):
    """Integrator failure, non-finite values or loss of positivity."""


@dataclass(frozen=True)
class NoiseParams:
    """Local loss rates (rad/us) and bath occupations of the two modes."""

    kappa1: float = 0.0
    kappa2: float = 0.0
    nth1: float = 0.0
    nth2: float = 0.0

    def __post_init__(self):
        if min(self.kappa1, self.kappa2, self.nth1, self.nth2) < 0:
            raise ValueError("noise rates and occupations must be non-negative")

    @classmethod
    def from_khz(cls, kappa_khz: float, nth: float = 0.0, kappa2_khz: float | None = None,
                 nth2: float | None = None) -> "NoiseParams":
        k2 = kappa_khz if kappa2_khz is None else kappa2_khz
        return cls(kappa1=2 * math.pi * kappa_khz * 1e-3, kappa2=2 * math.pi * k2 * 1e-3,
                   nth1=nth, nth2=nth if nth2 is None else nth2)

    def collapse_ops(self, trunc: Truncation) -> list[sp.csr_matrix]:
        ops = []
        for mode, kappa, nth in ((1, self.kappa1, self.nth1), (2, self.kappa2, self.nth2)):
            a = ladder_op(mode, trunc)
            if kappa * (nth + 1) > 0:
                ops.append(math.sqrt(kappa * (nth + 1)) * a)
            if kappa * nth > 0:
                ops.append((math.sqrt(kappa * nth) * a.conj().T).tocsr())
        return ops


@dataclass
class SimResult:
    """Sampled trajectory of one evolution (or a concatenation of several)."""

    times: np.ndarray
    trunc: Truncation
    all_populations: np.ndarray          # (n_samples, dim)
    final_state: np.ndarray
    fidelity: np.ndarray | None = None
    tracked: tuple[KetLabel, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def populations(self) -> dict[KetLabel, np.ndarray]:
        return {lab: self.population(lab) for lab in self.tracked}

    def population(self, label) -> np.ndarray:
        return self.all_populations[:, basis_index(label, self.trunc)]

    @property
    def converged(self) -> bool:
        return self.diagnostics.get("max_edge_population", 0.0) < 1e-6

    def to_csv(self, path) -> None:
        labels = self.tracked or tuple(self.trunc.labels())
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(SIMRESULT_SCHEMA + "\n")
            w = csv.writer(fh)
            head = ["time_us"] + [f"pop_{a}_{b}" for a, b in labels]
            if self.fidelity is not None:
                head.append("fidelity")
            w.writerow(head)
            cols = [self.population(lab) for lab in labels]
            for i, t in enumerate(self.times):
                row = [f"{t:.12g}"] + [f"{c[i]:.12g}" for c in cols]
                if self.fidelity is not None:
                    row.append(f"{self.fidelity[i]:.12g}")
                w.writerow(row)


def concat_results(parts: Sequence[SimResult]) -> SimResult:
    """Join consecutive segments, dropping duplicated boundary samples."""
    times, pops, fids = [], [], []
    diag: dict = {"nfev": 0, "max_edge_population": 0.0, "commutator_error": 0.0,
                  "norm_drift": 0.0}
    last_t = None
    for part in parts:
        sl = slice(1, None) if last_t is not None and part.times[0] == last_t else slice(None)
        last_t = part.times[-1]
        times.append(part.times[sl])
        pops.append(part.all_populations[sl])
        if part.fidelity is not None:
            fids.append(part.fidelity[sl])
        for key in ("max_edge_population", "commutator_error", "norm_drift"):
            diag[key] = max(diag[key], part.diagnostics.get(key, 0.0))
        diag["nfev"] += part.diagnostics.get("nfev", 0)
    last = parts[-1]
    return SimResult(times=np.concatenate(times), trunc=last.trunc,
                     all_populations=np.concatenate(pops), final_state=last.final_state,
                     fidelity=np.concatenate(fids) if len(fids) == len(parts) else None,
                     tracked=last.tracked, diagnostics=diag)


def _sample_grid(t0: float, t1: float, sample_dt: float | None) -> np.ndarray:
    if sample_dt is None or sample_dt <= 0:
        return np.array([t0, t1])
    n = max(1, int(math.ceil((t1 - t0) / sample_dt - 1e-9)))
    return np.linspace(t0, t1, n + 1)


def _span(t_span) -> tuple[float, float]:
    if np.isscalar(t_span):
        t0, t1 = 0.0, float(t_span)
    else:
        t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValueError(f"empty time span {t_span}")
    return t0, t1


def _diagnose(states: Iterable[np.ndarray], trunc: Truncation) -> dict:
    edge, comm = 0.0, 0.0
    for s in states:
        edge = max(edge, edge_population(s, trunc))
        comm = max(comm, commutator_truncation_error(s, 1, trunc),
                   commutator_truncation_error(s, 2, trunc))
    return {"max_edge_population": edge, "commutator_error": comm}


def evolve_closed(hamiltonian: Callable, psi0: np.ndarray, t_span, *, trunc: Truncation,
                  sample_dt: float | None = None, rtol: float = 1e-8, atol: float | None = None,
                  track: Sequence = (), fidelity_fn: Callable | None = None) -> SimResult:
    """Integrate i dpsi/dt = H(t) psi.

    ``hamiltonian`` is any callable t -> operator; objects exposing
    ``energies`` and ``apply_coupling`` are integrated in their diagonal frame.
    """
    t0, t1 = _span(t_span)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > 1e-8:
        raise ValueError("initial ket is not normalized")
    atol = rtol * 1e-2 if atol is None else atol
    energies = getattr(hamiltonian, "energies", None)
    framed = energies is not None and hasattr(hamiltonian, "apply_coupling")

    if framed:
        def rhs(t, y):
            ph = np.exp(1j * energies * t)
            return -1j * ph * hamiltonian.apply_coupling(t, y / ph)
        y0 = np.exp(1j * energies * t0) * psi0
    else:
        def rhs(t, y):
            return -1j * (hamiltonian(t) @ y)
        y0 = psi0

    t_eval = _sample_grid(t0, t1, sample_dt)
    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise EvolutionError(f"integration failed: {sol.message}")
    ys = sol.y.T
    if framed:
        ys = ys * np.exp(-1j * np.outer(sol.t, energies))
    if not np.all(np.isfinite(ys)):
        raise EvolutionError("non-finite amplitudes")
    pops = np.abs(ys) ** 2
    diag = _diagnose(ys, trunc)
    diag["nfev"] = int(sol.nfev)
    diag["norm_drift"] = float(np.max(np.abs(pops.sum(axis=1) - 1.0)))
    fid = np.array([fidelity_fn(y) for y in ys]) if fidelity_fn is not None else None
    return SimResult(times=sol.t, trunc=trunc, all_populations=pops, final_state=ys[-1],
                     fidelity=fid, tracked=tuple(KetLabel(*l) for l in track), diagnostics=diag)


class _Dissipator:
    def __init__(self, noise: NoiseParams, trunc: Truncation):
        self.ops = [(c, c.conj().T.tocsr()) for c in noise.collapse_ops(trunc)]
        d = np.zeros(trunc.dim)
        for c, cd in self.ops:
            d += np.real((cd @ c).diagonal())
        self.half_sum = 0.5 * (d[:, None] + d[None, :])

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = -self.half_sum * rho
        for c, cd in self.ops:
            out += c @ (rho @ cd)
        return out


def evolve_lindblad(hamiltonian: Callable, rho0: np.ndarray, noise: NoiseParams, t_span, *,
                    trunc: Truncation, sample_dt: float | None = None, rtol: float = 1e-6,
                    atol: float | None = None, track: Sequence = (),
                    fidelity_fn: Callable | None = None) -> SimResult:
    """Integrate d rho/dt = -i[H(t), rho] + sum_j L_j(rho) with local thermal-loss dissipators."""
    t0, t1 = _span(t_span)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    _check_density(rho0, 1e-8)
    n = trunc.dim
    atol = rtol * 1e-2 if atol is None else atol
    dissipate = _Dissipator(noise, trunc)
    energies = getattr(hamiltonian, "energies", None)
    framed = energies is not None and hasattr(hamiltonian, "apply_coupling")

    if framed:
        gaps = energies[:, None] - energies[None, :]

        def rhs(t, y):
            ph = np.exp(1j * gaps * t)
            rho = y.reshape(n, n) / ph
            x = hamiltonian.apply_coupling(t, rho)
            drho = -1j * (x - x.conj().T) + dissipate(rho)
            return (ph * drho).ravel()
        y0 = (np.exp(1j * gaps * t0) * rho0).ravel()
    else:
        def rhs(t, y):
            rho = y.reshape(n, n)
            x = hamiltonian(t) @ rho
            return (-1j * (x - x.conj().T) + dissipate(rho)).ravel()
        y0 = rho0.ravel()

    t_eval = _sample_grid(t0, t1, sample_dt)
    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise EvolutionError(f"integration failed: {sol.message}")
    rhos = sol.y.T.reshape(-1, n, n)
    if framed:
        rhos = rhos * np.exp(-1j * gaps[None] * sol.t[:, None, None])
    if not np.all(np.isfinite(rhos)):
        raise EvolutionError("non-finite density matrix")
    for r in rhos:
        _check_density(r, 1e-6, error=EvolutionError)
    pops = np.real(np.diagonal(rhos, axis1=1, axis2=2))
    diag = _diagnose(rhos, trunc)
    diag["nfev"] = int(sol.nfev)
    diag["norm_drift"] = float(np.max(np.abs(pops.sum(axis=1) - 1.0)))
    fid = np.array([fidelity_fn(r) for r in rhos]) if fidelity_fn is not None else None
    return SimResult(times=sol.t, trunc=trunc, all_populations=pops, final_state=rhos[-1],
                     fidelity=fid, tracked=tuple(KetLabel(*l) for l in track), diagnostics=diag)


def _check_density(rho: np.ndarray, tol: float, error=ValueError) -> None:
    if abs(np.trace(rho).real - 1) > tol:
        raise error(f"trace deviates from 1 by {abs(np.trace(rho).real - 1):.2e}")
    herm = 0.5 * (rho + rho.conj().T)
    if np.max(np.abs(rho - herm)) > tol:
        raise error("density matrix is not Hermitian")
    lo = np.linalg.eigvalsh(herm)[0]
    if lo < -tol:
        raise error(f"density matrix has negative eigenvalue {lo:.2e}")


def to_density(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    return np.outer(state, state.conj()) if state.ndim == 1 else state


def fidelity(state: np.ndarray, target: np.ndarray) -> float:
    """|<target|psi>|^2 for kets, <target|rho|target> for density matrices."""
    state = np.asarray(state)
    target = np.asarray(target)
    if state.shape[0] != target.shape[0]:
        raise ValueError(f"dimension mismatch {state.shape} vs {target.shape}")
    if state.ndim == 1:
        return float(abs(np.vdot(target, state)) ** 2)
    return float(np.real(np.vdot(target, state @ target)))


def phase_free_fidelity(state: np.ndarray, ket_a: np.ndarray, ket_b: np.ndarray) -> tuple[float, float]:
    """Max over phi of the fidelity with (|a> + e^{i phi}|b>)/sqrt(2); returns (F, phi)."""
    rho_ab = _matrix_element(state, ket_a, ket_b)
    f = 0.5 * (_matrix_element(state, ket_a, ket_a).real
               + _matrix_element(state, ket_b, ket_b).real) + abs(rho_ab)
    return float(f), float(-np.angle(rho_ab))


def _matrix_element(state, bra, ket) -> complex:
    if state.ndim == 1:
        return np.vdot(bra, state) * np.conj(np.vdot(ket, state))
    return np.vdot(bra, state @ ket)


def reduced_state(state: np.ndarray, mode: int, trunc: Truncation) -> np.ndarray:
    """Single-mode density matrix of ``mode`` after tracing out the other one."""
    d1, d2 = trunc.shape
    if state.ndim == 1:
        m = state.reshape(d1, d2)
        return m @ m.conj().T if mode == 1 else m.T @ m.conj()
    r = state.reshape(d1, d2, d1, d2)
    if mode == 1:
        return np.einsum("ajbj->ab", r)
    if mode == 2:
        return np.einsum("jajb->ab", r)
    raise ValueError(f"mode must be 1 or 2, got {mode}")


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def trace_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(r1 - r2))))


@dataclass
class WignerGrid:
    re: np.ndarray
    im: np.ndarray
    w: np.ndarray           # indexed [im, re]

    def integral(self) -> float:
        return float(trapezoid(trapezoid(self.w, self.re, axis=1), self.im))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(WIGNER_SCHEMA + "\n")
            w = csv.writer(fh)
            w.writerow(["re_alpha", "im_alpha", "w"])
            for i, y in enumerate(self.im):
                for k, x in enumerate(self.re):
                    w.writerow([f"{x:.10g}", f"{y:.10g}", f"{self.w[i, k]:.12g}"])


def wigner(rho: np.ndarray, re: Sequence[float], im: Sequence[float] | None = None,
           pad: int | None = None) -> WignerGrid:
    """W(alpha) = (2/pi) sum_n (-1)^n <n| D(alpha)^dag rho D(alpha) |n>, normalized to 1.

    The displacement is the exact exponential of the truncated generator on a
    space padded by ``pad`` levels; the default grows with the grid radius so
    the displaced support of ``rho`` never reaches the cutoff.
    """
    re = np.asarray(re, dtype=float)
    im = re if im is None else np.asarray(im, dtype=float)
    if re.size == 0 or im.size == 0:
        raise ValueError("empty phase-space grid")
    rho = to_density(rho)
    dr = rho.shape[0]
    alpha = re[None, :] + 1j * im[:, None]
    r, theta = np.abs(alpha).ravel(), np.angle(alpha).ravel()
    if pad is None:
        reach = r.max() + math.sqrt(dr)
        pad = max(4, int(math.ceil(reach ** 2 + 8 * reach + 10)))
    m = dr + pad
    a = np.diag(np.sqrt(np.arange(1, m)), 1)
    # a^dag - a = -i P with P Hermitian, so D(r) = V exp(-i r lam) V^dag
    lam, vec = np.linalg.eigh(1j * (a.T - a))
    nn = np.arange(m)
    parity = (-1.0) ** nn
    # rows i < dr of D(alpha) = R(theta) D(r) R(theta)^dag
    d = (vec[None, :dr, :] * np.exp(-1j * r[:, None, None] * lam[None, None, :])) @ vec.conj().T
    d *= np.exp(1j * theta[:, None, None] * (nn[None, :dr, None] - nn[None, None, :]))
    w = np.einsum("pin,ij,pjn,n->p", d.conj(), rho, d, parity, optimize=True).real * (2 / np.pi)
    return WignerGrid(re=re, im=im, w=w.reshape(alpha.shape))


def _liouvillian_parts(hamiltonian, noise: NoiseParams, trunc: Truncation):
    """Row-major vectorization: vec(A rho B) = kron(A, B.T) vec(rho)."""
    n = trunc.dim
    eye = sp.identity(n, dtype=complex, format="csr")
    h0 = sp.diags(np.asarray(hamiltonian.energies, dtype=complex))
    l0 = -1j * (sp.kron(h0, eye) - sp.kron(eye, h0.T))
    for c in noise.collapse_ops(trunc):
        cdc = (c.conj().T @ c).tocsr()
        l0 = l0 + sp.kron(c, c.conj()) - 0.5 * (sp.kron(cdc, eye) + sp.kron(eye, cdc.T))
    return l0.tocsr(), eye


def evolve_lindblad_periodic(hamiltonian, rho0: np.ndarray, noise: NoiseParams, period: float,
                             t_final: float, *, trunc: Truncation, sample_dt: float | None = None,
                             rtol: float = 1e-9, fidelity_fn: Callable | None = None) -> SimResult:
    """Stroboscopic Lindblad evolution for a generator with period ``period``.

    The one-period propagator is integrated once and then applied repeatedly;
    samples fall on multiples of the period (rounded to ``sample_dt``).
    """
    if period <= 0 or t_final <= 0:
        raise ValueError("period and t_final must be positive")
    n = trunc.dim
    l0, eye = _liouvillian_parts(hamiltonian, noise, trunc)

    def rhs(t, y):
        v = hamiltonian.coupling(t)
        lt = l0 - 1j * (sp.kron(v, eye) - sp.kron(eye, v.T))
        return (lt @ y.reshape(n * n, n * n)).ravel()

    sol = solve_ivp(rhs, (0.0, period), np.eye(n * n, dtype=complex).ravel(), method="DOP853",
                    rtol=rtol, atol=rtol * 1e-3)
    if sol.status != 0:
        raise EvolutionError(f"period propagator failed: {sol.message}")
    prop = sol.y[:, -1].reshape(n * n, n * n)
    per_sample = max(1, int(round((sample_dt or t_final / 200) / period)))
    n_samples = max(1, int(t_final // (per_sample * period)))
    step = np.linalg.matrix_power(prop, per_sample)
    rho = to_density(rho0)
    _check_density(rho, 1e-8)
    vec = rho.ravel()
    rhos = [rho]
    for _ in range(n_samples):
        vec = step @ vec
        rhos.append(vec.reshape(n, n))
    rhos = np.array(rhos)
    if not np.all(np.isfinite(rhos)):
        raise EvolutionError("non-finite density matrix")
    for r in rhos:
        _check_density(r, 1e-6, error=EvolutionError)
    times = np.arange(n_samples + 1) * per_sample * period
    pops = np.real(np.diagonal(rhos, axis1=1, axis2=2))
    diag = _diagnose(rhos, trunc)
    diag["nfev"] = int(sol.nfev)
    diag["norm_drift"] = float(np.max(np.abs(pops.sum(axis=1) - 1.0)))
    diag["period_propagator"] = prop
    fid = np.array([fidelity_fn(r) for r in rhos]) if fidelity_fn is not None else None
    return SimResult(times=times, trunc=trunc, all_populations=pops, final_state=rhos[-1],
                     fidelity=fid, diagnostics=diag)
