"""Transition spectrum of the coupled-Kerr pair: detunings, Rabi rates,
parasitic-degeneracy maps, Kerr-ratio rationality and selectivity margins."""
from __future__ import annotations

import csv
import enum
import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .hilbert import KetLabel, SystemParams, Truncation, to_mhz

MAP_SCHEMA = "# kerrsel degeneracy-map v1"


class DegeneracyError(ValueError):
    """A parasitic channel is (numerically) resonant with the drive."""

    def __init__(self, message: str, transition: "Transition | None" = None):
        super().__init__(message)
        self.transition = transition


class Kind(str, enum.Enum):
    BS = "bs"
    TMS = "tms"


@dataclass(frozen=True, order=True)
class Transition:
    """Raising transition |n0, m0> -> |n0+1, m0-1> (BS) or |n0+1, m0+1> (TMS)."""

    kind: Kind
    n0: int
    m0: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.n0 < 0 or self.m0 < 0:
            raise ValueError(f"occupations must be non-negative: {self}")
        if self.kind is Kind.BS and self.m0 < 1:
            raise ValueError(f"beam-splitter transition needs m0 >= 1, got {self}")

    @property
    def initial(self) -> KetLabel:
        return KetLabel(self.n0, self.m0)

    @property
    def final(self) -> KetLabel:
        dm = -1 if self.kind is Kind.BS else 1
        return KetLabel(self.n0 + 1, self.m0 + dm)

    def within(self, trunc: Truncation) -> bool:
        return trunc.contains(*self.initial) and trunc.contains(*self.final)

    def __str__(self) -> str:
        return f"{self.kind.name}({self.n0},{self.m0})"

    @classmethod
    def parse(cls, text: str) -> "Transition":
        """Inverse of ``str``: ``"BS(1,1)"`` or ``"tms(0,0)"``."""
        m = re.fullmatch(r"\s*(bs|tms)\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*", text, re.IGNORECASE)
        if m is None:
            raise ValueError(f"cannot parse transition {text!r}")
        return cls(Kind(m.group(1).lower()), int(m.group(2)), int(m.group(3)))


def bs(n0: int, m0: int) -> Transition:
    return Transition(Kind.BS, n0, m0)


def tms(n0: int, m0: int) -> Transition:
    return Transition(Kind.TMS, n0, m0)


def level_energy(params: SystemParams, n1, n2):
    return (params.omega1 * n1 + 0.5 * params.k1 * n1 * (n1 - 1)
            + params.omega2 * n2 + 0.5 * params.k2 * n2 * (n2 - 1) + params.k12 * n1 * n2)


def transition_detuning(params: SystemParams, tr: Transition) -> float:
    """Bare transition frequency E(final) - E(initial).

    BS: w1 + K1 n0 - w2 - K2 (m0 - 1) + K12 (m0 - n0 - 1)
    TMS: w1 + K1 n0 + w2 + K2 m0 + K12 (n0 + m0 + 1)
    """
    n, m = tr.n0, tr.m0
    if tr.kind is Kind.BS:
        return (params.omega1 + params.k1 * n - params.omega2 - params.k2 * (m - 1)
                + params.k12 * (m - n - 1))
    return (params.omega1 + params.k1 * n + params.omega2 + params.k2 * m
            + params.k12 * (n + m + 1))


def rabi_frequency(params: SystemParams, tr: Transition) -> float:
    if tr.kind is Kind.BS:
        return params.j * math.sqrt((tr.n0 + 1) * tr.m0)
    return params.g * math.sqrt((tr.n0 + 1) * (tr.m0 + 1))


def relative_detuning(params: SystemParams, target: Transition, parasitic: Transition) -> float:
    """delta(parasitic) - delta(target) for two transitions of the same kind."""
    if target.kind is not parasitic.kind:
        raise ValueError(f"mixed kinds {target} / {parasitic}")
    dn, dm = parasitic.n0 - target.n0, parasitic.m0 - target.m0
    if target.kind is Kind.BS:
        return params.k1 * dn - params.k2 * dm + params.k12 * (dm - dn)
    return params.k1 * dn + params.k2 * dm + params.k12 * (dn + dm)


def degeneracy_tolerance(params: SystemParams) -> float:
    return 1e-9 * max(abs(params.k1), abs(params.k2), abs(params.k12), 1e-300)


def enumerate_transitions(trunc: Truncation, kinds: Sequence[Kind] = (Kind.BS, Kind.TMS)
                          ) -> Iterator[Transition]:
    """Every raising transition whose endpoints both lie inside ``trunc``."""
    for kind in kinds:
        kind = Kind(kind)
        for n0 in range(trunc.nmax1):
            for m0 in range(trunc.nmax2 + 1):
                if kind is Kind.BS and m0 == 0:
                    continue
                tr = Transition(kind, n0, m0)
                if tr.within(trunc):
                    yield tr


def _window(window) -> tuple[int, int]:
    wn, wm = (window, window) if np.isscalar(window) else window
    if wn < 1 or wm < 1:
        raise ValueError(f"window half-widths must be >= 1, got {window}")
    return int(wn), int(wm)


@dataclass
class DegeneracyMap:
    """Relative detunings delta'_rel(n', m') of same-kind parasitic transitions.

    Grids are indexed [n' - n_lo, m' - m_lo]; invalid occupations hold NaN.
    """

    target: Transition
    window: tuple[int, int]
    n_values: np.ndarray
    m_values: np.ndarray
    delta_rel: np.ndarray
    rabi: np.ndarray
    tol: float

    def entries(self) -> Iterator[tuple[int, int, float, float]]:
        for i, n in enumerate(self.n_values):
            for k, m in enumerate(self.m_values):
                if np.isfinite(self.delta_rel[i, k]):
                    yield int(n), int(m), float(self.delta_rel[i, k]), float(self.rabi[i, k])

    def zeros(self) -> list[tuple[int, int]]:
        """Off-target (dn, dm) offsets with |delta'_rel| below the degeneracy tolerance."""
        out = []
        for n, m, d, _ in self.entries():
            off = (n - self.target.n0, m - self.target.m0)
            if off != (0, 0) and abs(d) <= self.tol:
                out.append(off)
        return out

    def min_off_target(self) -> float:
        vals = [abs(d) for n, m, d, _ in self.entries()
                if (n, m) != (self.target.n0, self.target.m0)]
        return min(vals) if vals else math.inf

    def crowded(self, factor: float = 3.0) -> list[tuple[int, int]]:
        return [(n, m) for n, m, d, r in self.entries()
                if (n, m) != (self.target.n0, self.target.m0) and abs(d) < factor * r]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(MAP_SCHEMA + "\n")
            w = csv.writer(fh)
            w.writerow(["n_prime", "m_prime", "delta_rel_MHz", "rabi_MHz", "ratio"])
            for n, m, d, r in self.entries():
                ratio = abs(d) / r if r > 0 else math.inf
                w.writerow([n, m, f"{to_mhz(d):.12g}", f"{to_mhz(r):.12g}", f"{ratio:.12g}"])


def degeneracy_map(params: SystemParams, target: Transition, window) -> DegeneracyMap:
    wn, wm = _window(window)
    ns = np.arange(target.n0 - wn, target.n0 + wn + 1)
    ms = np.arange(target.m0 - wm, target.m0 + wm + 1)
    delta = np.full((ns.size, ms.size), np.nan)
    rabi = np.full_like(delta, np.nan)
    for i, n in enumerate(ns):
        for k, m in enumerate(ms):
            if n < 0 or m < 0 or (target.kind is Kind.BS and m < 1):
                continue
            p = Transition(target.kind, int(n), int(m))
            delta[i, k] = 0.0 if p == target else relative_detuning(params, target, p)
            rabi[i, k] = rabi_frequency(params, p)
    return DegeneracyMap(target, (wn, wm), ns, ms, delta, rabi, degeneracy_tolerance(params))


class Selectivity(NamedTuple):
    ratio: float                       # min |detuning| / Rabi over parasitic channels
    worst: Transition | None
    tms_flagged: tuple[Transition, ...]  # cross-kind channels with |Delta| < 10 Omega
    crowded: tuple[Transition, ...]      # any channel with |Delta| < 3 Omega


def channel_detuning(params: SystemParams, target: Transition, parasitic: Transition,
                     drive_freq: float | None = None) -> float:
    """Detuning of ``parasitic`` from the single drive that is resonant with ``target``."""
    w = transition_detuning(params, target) if drive_freq is None else drive_freq
    return transition_detuning(params, parasitic) - w


def selectivity_margin(params: SystemParams, target: Transition, window,
                       include_cross: bool = False) -> Selectivity:
    """Worst |detuning| / Rabi ratio over parasitic channels near ``target``.

    Same-kind channels use the relative detuning. Cross-kind channels are
    measured against the single drive resonant with the target (rotating frame
    w1 = w2 = 0); they are always scanned and reported in ``tms_flagged`` when
    closer than 10 Rabi widths, but enter the ratio only with ``include_cross``
    because gated pulses switch the other coupling off.
    """
    wn, wm = _window(window)
    tol = degeneracy_tolerance(params)
    best, worst, flagged, crowded = math.inf, None, [], []
    for kind in [target.kind] + [k for k in Kind if k is not target.kind]:
        cross = kind is not target.kind
        for n in range(target.n0 - wn, target.n0 + wn + 1):
            for m in range(target.m0 - wm, target.m0 + wm + 1):
                if n < 0 or m < 0 or (kind is Kind.BS and m < 1):
                    continue
                p = Transition(kind, n, m)
                om = rabi_frequency(params, p)
                if p == target or om <= 0:
                    continue
                d = abs(channel_detuning(params, target, p))
                ratio = 0.0 if d <= tol else d / om
                if cross and ratio < 10:
                    flagged.append(p)
                if cross and not include_cross:
                    continue
                if ratio < 3:
                    crowded.append(p)
                if ratio < best:
                    best, worst = ratio, p
    return Selectivity(best, worst, tuple(flagged), tuple(crowded))


@dataclass(frozen=True)
class RationalWitness:
    p: int
    q: int
    error: float

    @property
    def first_degeneracy(self) -> tuple[int, int]:
        """(dn, dm) = (q, p) where K1 dn = K2 dm first holds exactly."""
        return (self.q, self.p)

    @property
    def value(self) -> float:
        return self.p / self.q


def best_rational_approximations(x: float, max_q: int) -> list[RationalWitness]:
    """Continued-fraction convergents p/q of ``x`` with q <= max_q, ordered by q."""
    if not math.isfinite(x) or x <= 0:
        raise ValueError(f"x must be finite and positive, got {x}")
    if max_q < 1:
        raise ValueError("max_q must be >= 1")
    rest = Fraction(x)
    h0, h1, k0, k1 = 0, 1, 1, 0
    out = []
    while True:
        a = math.floor(rest)
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 > max_q:
            break
        out.append(RationalWitness(h1, k1, abs(x - h1 / k1)))
        frac = rest - a
        if frac == 0 or abs(x - h1 / k1) <= 1e-15 * x:
            break
        rest = 1 / frac
    return out


def linear_independence_witness(k1: float, k2: float, k12: float, coeff_bound: int,
                                tol: float | None = None) -> tuple[int, int, int] | None:
    """Integer triple (c1, c2, c3), all nonzero and |c_i| <= coeff_bound, minimizing
    |c1 K1 + c2 K2 + c3 K12|; returned only if that residual is below ``tol``.

    Sign is normalized to c1 > 0. Ties go to the smallest c1, then the largest
    c2, then the smallest |c3| (positive first).
    """
    if coeff_bound < 1:
        raise ValueError("coeff_bound must be >= 1")
    if tol is None:
        tol = 1e-9 * max(abs(k1), abs(k2), abs(k12))
    rng = [c for c in range(-coeff_bound, coeff_bound + 1) if c != 0]
    best_key, best = None, None
    for c1 in range(1, coeff_bound + 1):
        for c2, c3 in itertools.product(rng, rng):
            res = abs(c1 * k1 + c2 * k2 + c3 * k12)
            key = (0.0 if res <= tol else res, c1, -c2, abs(c3), -c3)
            if best_key is None or key < best_key:
                best_key, best = key, (c1, c2, c3)
    if best_key is None or best_key[0] > tol:
        return None
    return best
