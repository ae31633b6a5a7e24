"""Truncated two-mode Fock space and the coupled-Kerr Hamiltonian terms.

Basis layout is row-major in (n1, n2): ``index = n1 * (nmax2 + 1) + n2``.
All rates are angular frequencies in rad/us; ``mhz`` converts ordinary
frequencies (MHz) into that unit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator, Mapping, NamedTuple

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * math.pi


def mhz(f: float) -> float:
    """MHz -> rad/us."""
    return TWO_PI * f


def to_mhz(w: float) -> float:
    """rad/us -> MHz."""
    return w / TWO_PI


class KetLabel(NamedTuple):
    n1: int
    n2: int

    def __str__(self) -> str:
        return f"|{self.n1},{self.n2}>"


@dataclass(frozen=True)
class Truncation:
    """Inclusive photon-number cutoffs of the two modes."""

    nmax1: int
    nmax2: int

    def __post_init__(self):
        if self.nmax1 < 1 or self.nmax2 < 1:
            raise ValueError(f"truncation must be >= 1 per mode, got {self}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nmax1 + 1, self.nmax2 + 1)

    @property
    def dim(self) -> int:
        return (self.nmax1 + 1) * (self.nmax2 + 1)

    def contains(self, n1: int, n2: int) -> bool:
        return 0 <= n1 <= self.nmax1 and 0 <= n2 <= self.nmax2

    def labels(self) -> Iterator[KetLabel]:
        for n1 in range(self.nmax1 + 1):
            for n2 in range(self.nmax2 + 1):
                yield KetLabel(n1, n2)

    def padded(self, extra: int) -> "Truncation":
        return Truncation(self.nmax1 + extra, self.nmax2 + extra)

    def occupations(self) -> tuple[np.ndarray, np.ndarray]:
        """Photon numbers (n1, n2) of every basis index."""
        n1, n2 = np.divmod(np.arange(self.dim), self.nmax2 + 1)
        return n1, n2


@dataclass(frozen=True)
class SystemParams:
    """Hamiltonian coefficients in rad/us.

    Defaults to the rotating frame of the linear terms (omega1 = omega2 = 0).
    """

    k1: float
    k2: float
    j: float
    g: float
    k12: float = 0.0
    omega1: float = 0.0
    omega2: float = 0.0

    def __post_init__(self):
        vals = (self.k1, self.k2, self.j, self.g, self.k12, self.omega1, self.omega2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("all Hamiltonian coefficients must be finite")
        if self.j < 0 or self.g < 0:
            raise ValueError("coupling strengths j and g must be non-negative")

    @classmethod
    def from_mhz(cls, k1: float, k2: float, j: float, g: float, k12: float = 0.0,
                 omega1: float = 0.0, omega2: float = 0.0) -> "SystemParams":
        return cls(k1=mhz(k1), k2=mhz(k2), j=mhz(j), g=mhz(g), k12=mhz(k12),
                   omega1=mhz(omega1), omega2=mhz(omega2))

    def to_mhz(self) -> dict[str, float]:
        return {name: to_mhz(getattr(self, name))
                for name in ("k1", "k2", "j", "g", "k12", "omega1", "omega2")}

    def with_kerr_scale(self, scale: float) -> "SystemParams":
        return replace(self, k1=self.k1 * scale, k2=self.k2 * scale, k12=self.k12 * scale)


def fig3_params() -> SystemParams:
    """G/2pi = J/2pi = 20 MHz, K1/2pi = 300 MHz, K2 = K1/sqrt(2)."""
    return SystemParams.from_mhz(k1=300.0, k2=300.0 / math.sqrt(2), j=20.0, g=20.0)


def fig5_params(scale: float = 1.0) -> SystemParams:
    """Ladder-sweep base values: K1/2pi = 500 MHz, K2 = K1/sqrt(2), J = G = 20 MHz."""
    return SystemParams.from_mhz(k1=500.0 * scale, k2=500.0 * scale / math.sqrt(2),
                                 j=20.0, g=20.0)


def basis_index(label: tuple[int, int], trunc: Truncation) -> int:
    n1, n2 = label
    if not trunc.contains(n1, n2):
        raise ValueError(f"label {tuple(label)} outside truncation {trunc}")
    return n1 * (trunc.nmax2 + 1) + n2


def basis_label(index: int, trunc: Truncation) -> KetLabel:
    if not 0 <= index < trunc.dim:
        raise ValueError(f"index {index} outside [0, {trunc.dim})")
    return KetLabel(*divmod(index, trunc.nmax2 + 1))


def basis_ket(label: tuple[int, int], trunc: Truncation) -> np.ndarray:
    psi = np.zeros(trunc.dim, dtype=complex)
    psi[basis_index(label, trunc)] = 1.0
    return psi


def ket_from_amplitudes(amplitudes: Mapping[tuple[int, int], complex], trunc: Truncation,
                        normalize: bool = True) -> np.ndarray:
    psi = np.zeros(trunc.dim, dtype=complex)
    for label, amp in amplitudes.items():
        psi[basis_index(label, trunc)] += amp
    if normalize:
        psi /= np.linalg.norm(psi)
    return psi


def _single_mode_annihilation(nmax: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, nmax + 1, dtype=float)), 1, format="csr")


def ladder_op(mode: int, trunc: Truncation) -> sp.csr_matrix:
    """Annihilation operator of ``mode`` (1 or 2) on the product space."""
    if mode == 1:
        return sp.kron(_single_mode_annihilation(trunc.nmax1), sp.identity(trunc.nmax2 + 1),
                       format="csr").astype(complex)
    if mode == 2:
        return sp.kron(sp.identity(trunc.nmax1 + 1), _single_mode_annihilation(trunc.nmax2),
                       format="csr").astype(complex)
    raise ValueError(f"mode must be 1 or 2, got {mode}")


def number_op(mode: int, trunc: Truncation) -> sp.csr_matrix:
    n1, n2 = trunc.occupations()
    return sp.diags((n1 if mode == 1 else n2).astype(complex), format="csr")


def free_energies(params: SystemParams, trunc: Truncation) -> np.ndarray:
    """Diagonal of the free Hamiltonian (linear + self-Kerr + cross-Kerr)."""
    n1, n2 = trunc.occupations()
    return (params.omega1 * n1 + 0.5 * params.k1 * n1 * (n1 - 1)
            + params.omega2 * n2 + 0.5 * params.k2 * n2 * (n2 - 1)
            + params.k12 * n1 * n2).astype(float)


def build_free_hamiltonian(params: SystemParams, trunc: Truncation) -> sp.csr_matrix:
    return sp.diags(free_energies(params, trunc).astype(complex), format="csr")


def _raising_ops(trunc: Truncation) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """a1^dag a2 (beam-splitter raising) and a1^dag a2^dag (pair creation)."""
    a1, a2 = ladder_op(1, trunc), ladder_op(2, trunc)
    return (a1.conj().T @ a2).tocsr(), (a1.conj().T @ a2.conj().T).tocsr()


def build_interaction(params: SystemParams, trunc: Truncation) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Static beam-splitter and two-mode-squeezing Hamiltonians."""
    bs_up, tms_up = _raising_ops(trunc)
    bs = params.j * (bs_up + bs_up.conj().T)
    tms = params.g * (tms_up + tms_up.conj().T)
    return bs.tocsr(), tms.tocsr()


@dataclass(frozen=True)
class Tone:
    """One modulated coupling: ``amp * exp(i phase) * exp(-i freq (t - t_ref)) * raise + h.c.``"""

    kind: str  # "bs" | "tms"
    amp: float
    freq: float
    phase: float = 0.0
    t_ref: float = 0.0

    def coefficient(self, t: float) -> complex:
        return self.amp * np.exp(1j * (self.phase - self.freq * (t - self.t_ref)))


class DrivenHamiltonian:
    """H(t) = diag(E) + sum over tones of the modulated BS / TMS couplings,
    plus an optional ancilla drive ``eps (a2^dag e^{-i w t} + h.c.)``.

    Calling the object returns the sparse operator at time t; ``apply`` is the
    allocation-light matvec used by the integrators.
    """

    def __init__(self, params: SystemParams, trunc: Truncation, tones=(), ancilla_drive=None):
        self.params = params
        self.trunc = trunc
        self.energies = free_energies(params, trunc)
        self.tones = tuple(tones)
        self.ancilla_drive = ancilla_drive  # (eps, freq) or None
        bs_up, tms_up = _raising_ops(trunc)
        self._ops = {"bs": bs_up, "tms": tms_up}
        self._ops_dag = {"bs": bs_up.conj().T.tocsr(), "tms": tms_up.conj().T.tocsr()}
        self._a2_dag = ladder_op(2, trunc).conj().T.tocsr()
        self._a2 = ladder_op(2, trunc)

    @property
    def dim(self) -> int:
        return self.trunc.dim

    def coupling(self, t: float) -> sp.csr_matrix:
        """Off-diagonal (drive) part V(t)."""
        v = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for tone in self.tones:
            c = tone.coefficient(t)
            v = v + c * self._ops[tone.kind] + np.conj(c) * self._ops_dag[tone.kind]
        if self.ancilla_drive is not None:
            eps, w = self.ancilla_drive
            c = eps * np.exp(-1j * w * t)
            v = v + c * self._a2_dag + np.conj(c) * self._a2
        return v.tocsr()

    def __call__(self, t: float) -> sp.csr_matrix:
        return (sp.diags(self.energies.astype(complex)) + self.coupling(t)).tocsr()

    def apply_coupling(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x, dtype=complex)
        for tone in self.tones:
            c = tone.coefficient(t)
            out += c * (self._ops[tone.kind] @ x) + np.conj(c) * (self._ops_dag[tone.kind] @ x)
        if self.ancilla_drive is not None:
            eps, w = self.ancilla_drive
            c = eps * np.exp(-1j * w * t)
            out += c * (self._a2_dag @ x) + np.conj(c) * (self._a2 @ x)
        return out

    def apply(self, t: float, x: np.ndarray) -> np.ndarray:
        """H(t) @ x for a vector or a (dim, k) block."""
        e = self.energies if x.ndim == 1 else self.energies[:, None]
        return e * x + self.apply_coupling(t, x)

    def frame_rates(self) -> tuple[float, float] | None:
        """Per-mode rotation rates that make all tones static, or None."""
        if self.ancilla_drive is not None:
            return None
        freqs = {}
        for tone in self.tones:
            if tone.kind in freqs and not math.isclose(freqs[tone.kind], tone.freq):
                return None
            freqs[tone.kind] = tone.freq
        wj, wg = freqs.get("bs"), freqs.get("tms")
        if wj is None and wg is None:
            return (0.0, 0.0)
        if wg is None:
            return (wj, 0.0)
        if wj is None:
            return (wg, 0.0)
        return (0.5 * (wg + wj), 0.5 * (wg - wj))

    def static_generator(self, rates: tuple[float, float], t0: float = 0.0) -> np.ndarray:
        """Time-independent Hamiltonian in the frame exp(-i (r1 n1 + r2 n2)(t - t0)).

        Only valid when every tone shares the frame (see ``frame_rates``).
        """
        n1, n2 = self.trunc.occupations()
        h = np.diag(self.energies - rates[0] * n1 - rates[1] * n2).astype(complex)
        for tone in self.tones:
            c = tone.coefficient(t0)
            up = self._ops[tone.kind].toarray()
            h += c * up + np.conj(c) * up.conj().T
        return h


def modulated_hamiltonian(params: SystemParams, trunc: Truncation, gates: Mapping[str, bool],
                          freqs: Mapping[str, float], t: float) -> sp.csr_matrix:
    """H0 + bs_on J (a1^dag a2 e^{-i w_J t} + h.c.) + tms_on G (a1^dag a2^dag e^{-i w_G t} + h.c.)."""
    tones = []
    if gates.get("bs", False):
        tones.append(Tone("bs", params.j, freqs.get("bs", 0.0)))
    if gates.get("tms", False):
        tones.append(Tone("tms", params.g, freqs.get("tms", 0.0)))
    return DrivenHamiltonian(params, trunc, tones)(t)


def commutator_truncation_error(state: np.ndarray, mode: int, trunc: Truncation) -> float:
    """|<[a, a^dag]> - 1| on a ket or density matrix using truncated operators.

    The truncated commutator is diag(1, ..., 1, -nmax), so the error is
    (nmax + 1) times the population of the cutoff level.
    """
    a = ladder_op(mode, trunc)
    comm = (a @ a.conj().T - a.conj().T @ a).tocsr()
    if state.ndim == 1:
        val = np.vdot(state, comm @ state)
    else:
        val = (comm @ state).trace()
    return float(abs(val.real - 1.0))


def edge_population(state: np.ndarray, trunc: Truncation) -> float:
    """Largest population held by a cutoff level of either mode."""
    pops = populations(state).reshape(trunc.shape)
    return float(max(pops[-1, :].sum(), pops[:, -1].sum()))


def populations(state: np.ndarray) -> np.ndarray:
    if state.ndim == 1:
        return np.abs(state) ** 2
    return np.real(np.diagonal(state)).copy()
