"""Effective-Hamiltonian analysis of one selective pulse.

In the frame where the driven target transition is static, every other
channel p of an active coupling kind oscillates at its detuning
``Delta_p = delta_p - w_kind(p)``. The first Magnus term is the resonant
two-level block; the second gives diagonal AC Stark shifts
``sum_p Omega_p^2 / Delta_p (|f_p><f_p| - |i_p><i_p|)`` and a coherent leakage
``sum_p |Omega_p / Delta_p|^2``. Third and fourth orders are reported as
scaling estimates only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

from .hilbert import KetLabel, SystemParams, Truncation, to_mhz
from .spectrum import (DegeneracyError, Kind, Transition, enumerate_transitions,
                       rabi_frequency, transition_detuning)

DriveFreqs = Mapping[str, float]


def default_drive(params: SystemParams, target: Transition) -> dict[str, float]:
    """A single drive resonant with the bare target transition."""
    return {target.kind.value: transition_detuning(params, target)}


def _freqs(params, target, drive_freqs) -> dict[str, float]:
    if drive_freqs is None:
        return default_drive(params, target)
    out = {Kind(k).value: float(v) for k, v in drive_freqs.items()}
    if not out:
        raise ValueError("at least one drive frequency is required")
    return out


def resonant_block(params: SystemParams, target: Transition) -> float:
    """Rabi rate of the effective two-level Hamiltonian rabi (|f><i| + h.c.)."""
    return rabi_frequency(params, target)


def parasitic_detuning(params: SystemParams, target: Transition, parasitic: Transition,
                       drive_freqs: DriveFreqs | None = None) -> float:
    """Oscillation rate of the ``parasitic`` matrix element in the target frame.

    Uses the drive of the parasitic's own kind; if that coupling is not driven,
    falls back to the target's drive (single-drive bookkeeping).
    """
    freqs = _freqs(params, target, drive_freqs)
    w = freqs.get(parasitic.kind.value, freqs.get(target.kind.value))
    if w is None:
        w = next(iter(freqs.values()))
    return transition_detuning(params, parasitic) - w


class Channel(NamedTuple):
    transition: Transition
    rabi: float
    detuning: float


def parasitic_channels(params: SystemParams, target: Transition, trunc: Truncation,
                       drive_freqs: DriveFreqs | None = None,
                       touching: Iterable[KetLabel] | None = None) -> list[Channel]:
    """Off-resonant couplings of the driven kinds inside ``trunc``.

    Raises DegeneracyError if one of them is resonant to within 1e-6 max(J, G).
    """
    freqs = _freqs(params, target, drive_freqs)
    touch = None if touching is None else {KetLabel(*t) for t in touching}
    tol = 1e-6 * max(params.j, params.g)
    out = []
    for tr in enumerate_transitions(trunc, [Kind(k) for k in freqs]):
        if tr == target:
            continue
        if touch is not None and tr.initial not in touch and tr.final not in touch:
            continue
        om = rabi_frequency(params, tr)
        if om == 0:
            continue
        d = transition_detuning(params, tr) - freqs[tr.kind.value]
        if abs(d) <= tol:
            raise DegeneracyError(f"channel {tr} is resonant with the {tr.kind.value} drive "
                                  f"(detuning {to_mhz(d):.3g} MHz)", tr)
        out.append(Channel(tr, om, d))
    return out


def stark_shift_second_order(params: SystemParams, target: Transition, trunc: Truncation,
                             drive_freqs: DriveFreqs | None = None) -> dict[KetLabel, float]:
    """Second-order diagonal shifts: a raising channel i -> f with Delta > 0
    pushes |i> down by Omega^2 / Delta and |f> up by the same amount."""
    shifts = {lab: 0.0 for lab in trunc.labels()}
    for ch in parasitic_channels(params, target, trunc, drive_freqs):
        s = ch.rabi ** 2 / ch.detuning
        shifts[ch.transition.final] += s
        shifts[ch.transition.initial] -= s
    return shifts


def compensated_drive_frequency(params: SystemParams, target: Transition, trunc: Truncation,
                                drive_freqs: DriveFreqs | None = None) -> float:
    """Bare transition frequency plus the differential second-order Stark shift."""
    shifts = stark_shift_second_order(params, target, trunc, drive_freqs)
    return (transition_detuning(params, target)
            + shifts[target.final] - shifts[target.initial])


def leakage_breakdown(params: SystemParams, target: Transition, trunc: Truncation,
                      drive_freqs: DriveFreqs | None = None) -> dict[str, float]:
    out = {"bs": 0.0, "tms": 0.0}
    for ch in parasitic_channels(params, target, trunc, drive_freqs,
                                 touching=(target.initial, target.final)):
        out[ch.transition.kind.value] += (ch.rabi / ch.detuning) ** 2
    return out


def leakage_probability(params: SystemParams, target: Transition, trunc: Truncation,
                        drive_freqs: DriveFreqs | None = None) -> float:
    """sum |Omega_k / Delta_k|^2 over channels attached to either target state."""
    return sum(leakage_breakdown(params, target, trunc, drive_freqs).values())


@dataclass(frozen=True)
class BudgetEntry:
    effect: str
    scaling: str
    order: int
    magnitude: float          # rad/us, or a probability when unit == "probability"
    unit: str = "rad/us"

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("budget magnitudes are non-negative")

    def to_dict(self) -> dict:
        mag = to_mhz(self.magnitude) if self.unit == "rad/us" else self.magnitude
        return {"effect": self.effect, "scaling": self.scaling, "order": self.order,
                "magnitude_MHz" if self.unit == "rad/us" else "magnitude": mag,
                "unit": "MHz" if self.unit == "rad/us" else self.unit}


def error_budget(params: SystemParams, target: Transition, trunc: Truncation,
                 drive_freqs: DriveFreqs | None = None) -> list[BudgetEntry]:
    om = resonant_block(params, target)
    shifts = stark_shift_second_order(params, target, trunc, drive_freqs)
    near = parasitic_channels(params, target, trunc, drive_freqs,
                              touching=(target.initial, target.final))
    r2 = max(((c.rabi / c.detuning) ** 2 for c in near), default=0.0)
    r4 = max((c.rabi ** 4 / abs(c.detuning) ** 3 for c in near), default=0.0)
    rabi_law = "J*sqrt((n0+1)*m0)" if target.kind is Kind.BS else "G*sqrt((n0+1)*(m0+1))"
    return [
        BudgetEntry("Ideal Rabi oscillation", rabi_law, 1, om),
        BudgetEntry("AC Stark shift", "Omega_k^2/Delta_k", 2,
                    abs(shifts[target.final] - shifts[target.initial])),
        BudgetEntry("Rabi freq. correction", "Omega*Omega_k^2/Delta_k^2", 3, om * r2),
        BudgetEntry("Nonlinear Stark shift", "Omega_k^4/Delta_k^3", 4, r4),
        BudgetEntry("Coherent leakage", "sum |Omega_k/Delta_k|^2", 2,
                    sum((c.rabi / c.detuning) ** 2 for c in near), "probability"),
    ]


def budget_json(entries: Iterable[BudgetEntry]) -> str:
    return json.dumps([e.to_dict() for e in entries], indent=2)


@dataclass
class EffectiveReport:
    target: Transition
    rabi: float
    stark_shifts: dict[KetLabel, float]
    bare_detuning: float
    compensated_detuning: float
    leakage_estimate: float
    budget: list[BudgetEntry] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        """The two-level model has no coupling (Omega = 0)."""
        return self.rabi == 0

    def to_dict(self) -> dict:
        t = self.target
        return {
            "target": str(t),
            "rabi_MHz": to_mhz(self.rabi),
            "bare_detuning_MHz": to_mhz(self.bare_detuning),
            "compensated_detuning_MHz": to_mhz(self.compensated_detuning),
            "stark_initial_MHz": to_mhz(self.stark_shifts[t.initial]),
            "stark_final_MHz": to_mhz(self.stark_shifts[t.final]),
            "leakage_estimate": self.leakage_estimate,
            "degenerate_two_level": self.degenerate,
            "budget": [e.to_dict() for e in self.budget],
        }


def effective_report(params: SystemParams, target: Transition, trunc: Truncation,
                     drive_freqs: DriveFreqs | None = None) -> EffectiveReport:
    if not target.within(trunc):
        raise ValueError(f"{target} does not fit in {trunc}")
    shifts = stark_shift_second_order(params, target, trunc, drive_freqs)
    bare = transition_detuning(params, target)
    return EffectiveReport(
        target=target, rabi=resonant_block(params, target), stark_shifts=shifts,
        bare_detuning=bare,
        compensated_detuning=bare + shifts[target.final] - shifts[target.initial],
        leakage_estimate=leakage_probability(params, target, trunc, drive_freqs),
        budget=error_budget(params, target, trunc, drive_freqs))
