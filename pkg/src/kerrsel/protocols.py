"""Pulse sequences for state synthesis and their execution.

A pulse drives one transition with a square, gated BS or TMS tone
``amp * exp(i phase) * exp(-i w (t - t_start)) * raise + h.c.``. Starting from
the source level, a resonant pulse of angle theta yields
``cos(theta/2)|i> - i exp(i phase) sin(theta/2)|f>`` in the drive frame; the
duration is ``theta / (2 Omega)``.

AUTO frequencies start from the Stark-compensated value; calibration then
refines frequency and duration on the exact propagator of the full truncated
Hamiltonian, which is static in the frame co-rotating with the tone.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import minimize_scalar

from . import magnus
from .evolve import (NoiseParams, SimResult, _diagnose, concat_results,
                     evolve_closed, evolve_lindblad, evolve_lindblad_periodic, fidelity,
                     phase_free_fidelity, reduced_state, to_density)
from .hilbert import (KetLabel, SystemParams, Truncation, Tone, DrivenHamiltonian, basis_index,
                      basis_ket, ket_from_amplitudes, mhz, to_mhz)
from .spectrum import Kind, Transition, rabi_frequency, transition_detuning

log = logging.getLogger(__name__)

AUTO = None


class PulseKind(str, enum.Enum):
    BS = "bs"
    TMS = "tms"
    RESET_ANCILLA = "reset_ancilla"
    WAIT = "wait"


@dataclass(frozen=True)
class PulseStep:
    """One protocol step. ``None`` (AUTO) frequency/duration are resolved before running.

    With ``reverse`` the pulse is calibrated to move population from the upper
    level of ``target`` down to its lower level.
    """

    kind: PulseKind
    target: Transition | None = None
    angle: float = math.pi
    drive_frequency: float | None = AUTO
    duration: float | None = AUTO
    phase: float = 0.0
    reverse: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", PulseKind(self.kind))
        if self.kind in (PulseKind.BS, PulseKind.TMS):
            if self.target is None or self.target.kind.value != self.kind.value:
                raise ValueError(f"{self.kind.value} step needs a matching target, got {self.target}")
            if not 0 < self.angle <= 2 * math.pi:
                raise ValueError(f"rotation angle must lie in (0, 2pi], got {self.angle}")
        if self.kind is PulseKind.WAIT and (self.duration is None or self.duration < 0):
            raise ValueError("wait step needs a non-negative duration")

    @property
    def is_pulse(self) -> bool:
        return self.kind in (PulseKind.BS, PulseKind.TMS)

    @property
    def resolved(self) -> bool:
        return not self.is_pulse or (self.drive_frequency is not None and self.duration is not None)

    @property
    def source(self) -> KetLabel:
        return self.target.final if self.reverse else self.target.initial

    @property
    def dest(self) -> KetLabel:
        return self.target.initial if self.reverse else self.target.final

    def __str__(self) -> str:
        if not self.is_pulse:
            return self.kind.value
        arrow = " (down)" if self.reverse else ""
        return f"{self.target} theta={self.angle / math.pi:.4g}pi{arrow}"

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.is_pulse:
            d.update(target=str(self.target), angle=self.angle, phase=self.phase,
                     reverse=self.reverse,
                     drive_frequency_MHz="auto" if self.drive_frequency is None
                     else to_mhz(self.drive_frequency))
        if self.is_pulse or self.kind is PulseKind.WAIT:
            d["duration_us"] = "auto" if self.duration is None else self.duration
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "PulseStep":
        kind = PulseKind(d["kind"])
        freq = d.get("drive_frequency_MHz", "auto")
        dur = d.get("duration_us", "auto")
        return cls(kind=kind,
                   target=Transition.parse(d["target"]) if "target" in d else None,
                   angle=float(d.get("angle", math.pi)),
                   drive_frequency=None if freq == "auto" else mhz(float(freq)),
                   duration=None if dur == "auto" else float(dur),
                   phase=float(d.get("phase", 0.0)), reverse=bool(d.get("reverse", False)))


def pulse(target: Transition, angle: float = math.pi, **kw) -> PulseStep:
    return PulseStep(PulseKind(target.kind.value), target, angle, **kw)


RESET = PulseStep(PulseKind.RESET_ANCILLA)


@dataclass(frozen=True)
class ProtocolSpec:
    """Named pulse sequence with its initial basis state and target state.

    ``phase_free`` marks two-component targets whose relative phase is fitted
    rather than prescribed (NOON states).
    """

    name: str
    initial: KetLabel
    steps: tuple[PulseStep, ...]
    target: tuple[tuple[KetLabel, complex], ...]
    phase_free: bool = False

    def __post_init__(self):
        object.__setattr__(self, "initial", KetLabel(*self.initial))
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "target",
                           tuple((KetLabel(*k), complex(a)) for k, a in self.target))
        if self.phase_free and len(self.target) != 2:
            raise ValueError("phase-free targets need exactly two components")

    def max_photons(self) -> tuple[int, int]:
        labels = [self.initial] + [k for k, _ in self.target]
        for s in self.steps:
            if s.is_pulse:
                labels += [s.target.initial, s.target.final]
        return max(l.n1 for l in labels), max(l.n2 for l in labels)

    def default_truncation(self, guard: int = 4) -> Truncation:
        n1, n2 = self.max_photons()
        return Truncation(n1 + guard, n2 + guard)

    def validate(self, trunc: Truncation) -> None:
        for s in self.steps:
            if s.is_pulse and not s.target.within(trunc):
                raise ValueError(f"step {s} does not fit in {trunc}")
        for k in [self.initial] + [k for k, _ in self.target]:
            basis_index(k, trunc)

    def initial_state(self, trunc: Truncation) -> np.ndarray:
        return basis_ket(self.initial, trunc)

    def target_state(self, trunc: Truncation) -> np.ndarray:
        return ket_from_amplitudes(dict(self.target), trunc)

    def fidelity_fn(self, trunc: Truncation) -> Callable[[np.ndarray], float]:
        if self.phase_free:
            (ka, _), (kb, _) = self.target
            a, b = basis_ket(ka, trunc), basis_ket(kb, trunc)
            return lambda s: phase_free_fidelity(s, a, b)[0]
        tgt = self.target_state(trunc)
        return lambda s: fidelity(s, tgt)

    def to_dict(self) -> dict:
        return {"name": self.name, "initial": list(self.initial),
                "steps": [s.to_dict() for s in self.steps],
                "target": [{"ket": list(k), "re": a.real, "im": a.imag} for k, a in self.target],
                "phase_free": self.phase_free}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProtocolSpec":
        return cls(name=d["name"], initial=KetLabel(*d["initial"]),
                   steps=tuple(PulseStep.from_dict(s) for s in d["steps"]),
                   target=tuple((KetLabel(*t["ket"]), complex(t.get("re", 0.0), t.get("im", 0.0)))
                                for t in d["target"]),
                   phase_free=bool(d.get("phase_free", False)))

    @classmethod
    def from_json(cls, text: str) -> "ProtocolSpec":
        return cls.from_dict(json.loads(text))


# -- protocol builders --------------------------------------------------------

def noon_protocol(params: SystemParams | None = None) -> ProtocolSpec:
    """N = 2 NOON state (|2,0> + e^{i phi}|0,2>)/sqrt(2) from vacuum.

    The second pair creation is a full pi pulse so that the vacuum branch is
    emptied before the final down-conversion |1,1> -> |0,2>.
    """
    steps = (pulse(Transition(Kind.TMS, 0, 0), math.pi / 2),
             pulse(Transition(Kind.BS, 1, 1)),
             RESET,
             pulse(Transition(Kind.TMS, 0, 0)),
             pulse(Transition(Kind.BS, 0, 2), reverse=True))
    r = 1 / math.sqrt(2)
    return ProtocolSpec("noon", KetLabel(0, 0), steps,
                        ((KetLabel(2, 0), r), (KetLabel(0, 2), r)), phase_free=True)


def fock_ladder_protocol(params: SystemParams | None, m: int) -> ProtocolSpec:
    """|m, 0> by alternating pair creation and photon transfer.

    Odd m starts from a |0,1> seed that is first moved into mode 1.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    steps = []
    if m % 2:
        initial, base = KetLabel(0, 1), 1
        steps.append(pulse(Transition(Kind.BS, 0, 1)))
    else:
        initial, base = KetLabel(0, 0), 0
    for k in range(m // 2):
        steps.append(pulse(Transition(Kind.TMS, base + 2 * k, 0)))
        steps.append(pulse(Transition(Kind.BS, base + 2 * k + 1, 1)))
    return ProtocolSpec(f"fock{m}", initial, tuple(steps), ((KetLabel(m, 0), 1.0),))


def fock4_protocol(params: SystemParams | None = None) -> ProtocolSpec:
    return fock_ladder_protocol(params, 4)


def superposition_pulse(params: SystemParams | None, target: Transition, theta: float,
                        phase: float = 0.0) -> PulseStep:
    """Partial rotation giving cos(theta/2)|i> - i e^{i phase} sin(theta/2)|f> (drive frame)."""
    if not 0 < theta <= math.pi:
        raise ValueError("theta must lie in (0, pi]")
    return pulse(target, theta, phase=phase)


def binomial_protocol(final_phase: float = 0.0) -> ProtocolSpec:
    """(sqrt(3)|1,2> + |3,0>)/2 from |0,3> by timed partial swaps."""
    steps = (pulse(Transition(Kind.BS, 0, 3)),
             pulse(Transition(Kind.BS, 1, 2), math.pi / 3),
             pulse(Transition(Kind.BS, 2, 1), phase=final_phase))
    return ProtocolSpec("binomial", KetLabel(0, 3), steps,
                        ((KetLabel(1, 2), math.sqrt(3) / 2), (KetLabel(3, 0), 0.5)))


PROTOCOLS = {"noon": lambda p, m: noon_protocol(p),
             "fock": lambda p, m: fock_ladder_protocol(p, m),
             "binomial": lambda p, m: binomial_protocol()}


# -- calibration --------------------------------------------------------------

class _FramePropagator:
    """Exact evolution of one square pulse from a basis state, via one
    diagonalization of the static co-rotating generator."""

    def __init__(self, params, trunc, tone: Tone, source: KetLabel):
        ham = DrivenHamiltonian(params, trunc, [tone])
        h = ham.static_generator(ham.frame_rates(), t0=tone.t_ref)
        self.e, self.u = eigh(h)
        self.c = self.u[basis_index(source, trunc)].conj()

    def amplitudes(self, tau: float, index: int) -> complex:
        return self.u[index] @ (np.exp(-1j * self.e * tau) * self.c)

    def populations(self, tau: float, *indices: int) -> list[float]:
        return [abs(self.amplitudes(tau, i)) ** 2 for i in indices]


def _best_transfer(prop: _FramePropagator, dest: int, lo: float, hi: float) -> tuple[float, float]:
    grid = np.linspace(lo, hi, 41)
    vals = [prop.populations(t, dest)[0] for t in grid]
    k = int(np.argmax(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(lambda t: -prop.populations(t, dest)[0], bounds=(a, b),
                          method="bounded", options={"xatol": 1e-9 * hi})
    return -res.fun, res.x


@dataclass(frozen=True)
class Calibration:
    frequency: float
    duration: float
    transfer: float           # destination population at the calibrated time
    compensated_frequency: float


def calibrate_pulse(params: SystemParams, trunc: Truncation, step: PulseStep,
                    refine_frequency: bool = True, window: float = 0.2) -> Calibration:
    """Frequency and duration for ``step`` maximizing transfer (theta = pi) or matching
    the population ratio sin^2(theta/2), searched within +-``window`` of theta/(2 Omega)."""
    tr = step.target
    om = rabi_frequency(params, tr)
    if om <= 0:
        raise ValueError(f"{tr} has zero Rabi frequency")
    amp = params.j if tr.kind is Kind.BS else params.g
    src, dst = basis_index(step.source, trunc), basis_index(step.dest, trunc)
    w_comp = magnus.compensated_drive_frequency(params, tr, trunc)
    w0 = w_comp if step.drive_frequency is None else step.drive_frequency
    t_pi = math.pi / (2 * om)

    def prop(w):
        return _FramePropagator(params, trunc, Tone(tr.kind.value, amp, w, step.phase), step.source)

    lo, hi = (1 - window) * t_pi, (1 + window) * t_pi
    if step.drive_frequency is None and refine_frequency:
        res = minimize_scalar(lambda w: -_best_transfer(prop(w), dst, lo, hi)[0],
                              bounds=(w0 - 0.3 * om, w0 + 0.3 * om), method="bounded",
                              options={"xatol": 1e-7 * om})
        w = float(res.x)
    else:
        w = w0
    p = prop(w)
    if step.duration is not None:
        tau = step.duration
    elif math.isclose(step.angle, math.pi):
        tau = _best_transfer(p, dst, lo, hi)[1]
    else:
        goal = math.sin(step.angle / 2) ** 2
        t0 = step.angle / (2 * om)

        def mismatch(t):
            ps, pd = p.populations(t, src, dst)
            return (pd / (ps + pd) - goal) ** 2
        tau = minimize_scalar(mismatch, bounds=((1 - window) * t0, (1 + window) * t0),
                              method="bounded", options={"xatol": 1e-10 * t0}).x
    return Calibration(w, float(tau), p.populations(tau, dst)[0], w_comp)


def pulse_duration(params: SystemParams, target: Transition, theta: float,
                   calibrate: bool = False, trunc: Truncation | None = None,
                   drive_frequency: float | None = None) -> float:
    """theta / (2 Omega), optionally refined on the full truncated dynamics."""
    om = rabi_frequency(params, target)
    if om <= 0:
        raise ValueError(f"{target} has zero Rabi frequency")
    if not calibrate:
        return theta / (2 * om)
    trunc = trunc or Truncation(target.final.n1 + 4, max(target.initial.n2, target.final.n2) + 4)
    step = pulse(target, theta, drive_frequency=drive_frequency)
    return calibrate_pulse(params, trunc, step).duration


def resolve_step(params: SystemParams, step: PulseStep, trunc: Truncation,
                 calibrate: bool = True, refine_frequency: bool = True) -> PulseStep:
    """Fill AUTO fields: the compensated frequency (optionally numerically refined)
    and the calibrated or analytic duration."""
    if step.resolved:
        return step
    if not calibrate:
        w = step.drive_frequency
        if w is None:
            w = magnus.compensated_drive_frequency(params, step.target, trunc)
        tau = step.duration
        if tau is None:
            tau = pulse_duration(params, step.target, step.angle)
        return replace(step, drive_frequency=w, duration=tau)
    cal = calibrate_pulse(params, trunc, step, refine_frequency=refine_frequency)
    return replace(step, drive_frequency=cal.frequency, duration=cal.duration)


def resolve_protocol(spec: ProtocolSpec, params: SystemParams, trunc: Truncation,
                     calibrate: bool = True, refine_frequency: bool = True) -> ProtocolSpec:
    spec.validate(trunc)
    return replace(spec, steps=tuple(resolve_step(params, s, trunc, calibrate, refine_frequency)
                                     for s in spec.steps))


# -- execution ----------------------------------------------------------------

def reset_ancilla(state: np.ndarray, trunc: Truncation, tol: float = 1e-6) -> np.ndarray:
    """Replace mode 2 by vacuum while keeping the mode-1 reduced state.

    A ket stays a ket when the mode-1 state is pure to within ``tol`` (the
    leading eigenvector is re-injected with its phase aligned to the vacuum
    column); otherwise the result is the density matrix rho_1 (x) |0><0|.
    """
    d1, d2 = trunc.shape
    vac = np.zeros(d2)
    vac[0] = 1.0
    rho1 = reduced_state(state, 1, trunc)
    if state.ndim == 1:
        lam, vec = np.linalg.eigh(rho1)
        if 1 - lam[-1] <= tol:
            v = vec[:, -1]
            overlap = np.vdot(v, state.reshape(d1, d2)[:, 0])
            if abs(overlap) > 0:
                v = v * overlap / abs(overlap)
            return np.kron(v, vac).astype(complex)
    return np.kron(rho1, np.outer(vac, vac)).astype(complex)


@dataclass
class ProtocolResult:
    spec: ProtocolSpec
    steps: tuple[PulseStep, ...]
    sim: SimResult
    step_fidelities: list[float]
    step_states: list[np.ndarray]
    step_times: list[float]
    final_fidelity: float
    phase: float | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def peak_fidelity(self) -> float:
        return float(np.max(self.sim.fidelity))

    @property
    def total_time(self) -> float:
        return sum(s.duration or 0.0 for s in self.steps)

    @property
    def converged(self) -> bool:
        return not any(f.startswith("non-converged") for f in self.flags)

    def summary(self) -> dict:
        return {"protocol": self.spec.name,
                "final_fidelity": self.final_fidelity,
                "peak_fidelity": self.peak_fidelity,
                "step_fidelities": self.step_fidelities,
                "total_time_us": self.total_time,
                "noon_phase": self.phase,
                "max_edge_population": self.sim.diagnostics.get("max_edge_population"),
                "commutator_error": self.sim.diagnostics.get("commutator_error"),
                "flags": self.flags,
                "steps": [s.to_dict() for s in self.steps]}


def run_protocol(spec: ProtocolSpec, params: SystemParams, trunc: Truncation | None = None,
                 noise: NoiseParams | None = None, *, calibrate: bool = True,
                 refine_frequency: bool = True, sample_dt: float | None = None,
                 rtol: float | None = None, initial_state: np.ndarray | None = None,
                 t0: float = 0.0, reset: str = "project",
                 reset_kappa: float = mhz(50.0), reset_time: float = 0.2,
                 max_grow: int = 4) -> ProtocolResult:
    """Execute ``spec`` step by step; each pulse is a separate integration segment.

    ``reset`` selects the RESET_ANCILLA model: "project" (instantaneous) or
    "decay" (a window of strong mode-2 loss of rate ``reset_kappa``).

    Without an explicit ``trunc`` the run starts from the default guard and
    grows both cutoffs by 2 until the edge population drops below 1e-6.
    """
    opts = dict(noise=noise, calibrate=calibrate, refine_frequency=refine_frequency,
                sample_dt=sample_dt, rtol=rtol, t0=t0, reset=reset, reset_kappa=reset_kappa,
                reset_time=reset_time)
    if trunc is None:
        if initial_state is not None:
            raise ValueError("an explicit truncation is required with initial_state")
        trunc = spec.default_truncation()
        for _ in range(max_grow):
            res = run_protocol(spec, params, trunc, **opts)
            if res.converged:
                return res
            log.info("edge population too large at %s, growing cutoffs", trunc)
            trunc = trunc.padded(2)
        return res
    steps = resolve_protocol(spec, params, trunc, calibrate, refine_frequency).steps
    fid = spec.fidelity_fn(trunc)
    state = spec.initial_state(trunc) if initial_state is None else np.asarray(initial_state, complex)
    noisy = noise is not None and (noise.kappa1 > 0 or noise.kappa2 > 0)
    if noisy:
        state = to_density(state)
    t = t0
    parts, step_fids, step_states, step_times = [], [], [], []
    for step in steps:
        if step.kind is PulseKind.RESET_ANCILLA:
            if reset == "decay":
                state = to_density(state)
                decay = NoiseParams(kappa1=noise.kappa1 if noise else 0.0, kappa2=reset_kappa,
                                    nth1=noise.nth1 if noise else 0.0)
                seg = _segment(DrivenHamiltonian(params, trunc), state, decay, t, reset_time,
                               trunc, sample_dt, rtol, fid)
                parts.append(seg)
                state, t = seg.final_state, t + reset_time
            else:
                state = reset_ancilla(state, trunc)
                parts.append(_instant(state, t, trunc, fid))
        else:
            tones = []
            if step.is_pulse:
                amp = params.j if step.kind is PulseKind.BS else params.g
                tones.append(Tone(step.kind.value, amp, step.drive_frequency, step.phase, t))
            if step.duration > 0:
                seg = _segment(DrivenHamiltonian(params, trunc, tones), state,
                               noise if (noisy or state.ndim == 2) else None,
                               t, step.duration, trunc, sample_dt, rtol, fid)
                parts.append(seg)
                state, t = seg.final_state, t + step.duration
        step_fids.append(float(fid(state)))
        step_states.append(state)
        step_times.append(t)
    if not parts:
        parts.append(_instant(state, t, trunc, fid))
    sim = concat_results(parts)
    flags = []
    if sim.diagnostics["max_edge_population"] >= 1e-6:
        flags.append(f"non-converged truncation: edge population "
                     f"{sim.diagnostics['max_edge_population']:.2e}")
    if sim.diagnostics["commutator_error"] >= 1e-4:
        flags.append(f"commutator error {sim.diagnostics['commutator_error']:.2e}")
    phase = None
    if spec.phase_free:
        (ka, _), (kb, _) = spec.target
        phase = phase_free_fidelity(state, basis_ket(ka, trunc), basis_ket(kb, trunc))[1]
    return ProtocolResult(spec, steps, sim, step_fids, step_states, step_times,
                          float(fid(state)), phase, flags)


def _segment(ham, state, noise, t, duration, trunc, sample_dt, rtol, fid) -> SimResult:
    dt = sample_dt if sample_dt is not None else duration / 40
    if state.ndim == 2 or noise is not None:
        return evolve_lindblad(ham, state, noise or NoiseParams(), (t, t + duration), trunc=trunc,
                               sample_dt=dt, rtol=rtol or 1e-8, fidelity_fn=fid)
    return evolve_closed(ham, state, (t, t + duration), trunc=trunc, sample_dt=dt,
                         rtol=rtol or 1e-9, fidelity_fn=fid)


def _instant(state, t, trunc, fid) -> SimResult:
    pops = np.real(np.diagonal(state)) if state.ndim == 2 else np.abs(state) ** 2
    diag = _diagnose([state], trunc)
    diag.update(nfev=0, norm_drift=abs(pops.sum() - 1))
    return SimResult(times=np.array([t]), trunc=trunc, all_populations=pops[None],
                     final_state=state, fidelity=np.array([fid(state)]), diagnostics=diag)


def convergence_check(spec: ProtocolSpec, params: SystemParams, trunc: Truncation,
                      extra: int = 2, **kw) -> tuple[float, float]:
    """Final fidelities at ``trunc`` and at ``trunc`` padded by ``extra`` levels."""
    a = run_protocol(spec, params, trunc, **kw).final_fidelity
    b = run_protocol(spec, params, trunc.padded(extra), **kw).final_fidelity
    return a, b


def drive_frame_amplitudes(state: np.ndarray, trunc: Truncation, step: PulseStep) -> np.ndarray:
    """Undo the co-rotating frame of a resolved pulse that started at t = 0."""
    n1, n2 = trunc.occupations()
    ham = DrivenHamiltonian(SystemParams(0, 0, 0, 0), trunc,
                            [Tone(step.kind.value, 1.0, step.drive_frequency)])
    r1, r2 = ham.frame_rates()
    return np.exp(1j * (r1 * n1 + r2 * n2) * step.duration) * state


def run_binomial(params: SystemParams, trunc: Truncation | None = None, **kw) -> ProtocolResult:
    """Binomial-state sequence with the last pulse phase set so the final
    relative phase between |1,2> and |3,0> is zero."""
    probe = run_protocol(binomial_protocol(0.0), params, trunc, **kw)
    tr = probe.sim.trunc
    psi = probe.sim.final_state
    rel = np.angle(psi[basis_index((3, 0), tr)] / psi[basis_index((1, 2), tr)])
    return run_protocol(binomial_protocol(-rel), params, tr, **kw)


# -- dissipative stabilization -------------------------------------------------

@dataclass(frozen=True)
class StabilizationConfig:
    """Engineered-dissipation stabilization of |n0> in mode 1.

    The ancilla (mode 2) is driven with amplitude ``eps`` on its |n0-1, 0> ->
    |n0-1, 1> line (selective in n1 only through cross-Kerr). A BS pump tone
    converts |n0-1, 1> into |n0, 0> and a BS cool tone converts |n0+1, 0> into
    |n0, 1>; mode-2 loss returns the ancilla to vacuum. Default amplitudes
    (rad/us) follow the ordering cool, eps >> pump that puts the pump's dark
    state on the target.
    """

    n0: int = 1
    eps: float = mhz(0.4)
    pump_amp: float = mhz(0.08)
    cool_amp: float = mhz(0.3)
    noise: NoiseParams = NoiseParams(kappa1=mhz(0.001), kappa2=mhz(1.0))
    drive_freq: float | None = None     # None: resonant with the selective ancilla line

    def __post_init__(self):
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if min(self.eps, self.pump_amp, self.cool_amp) < 0:
            raise ValueError("drive amplitudes must be non-negative")

    def pump_transition(self) -> Transition:
        return Transition(Kind.BS, self.n0 - 1, 1)

    def cool_transition(self) -> Transition:
        return Transition(Kind.BS, self.n0, 1)

    def ancilla_frequency(self, params: SystemParams) -> float:
        if self.drive_freq is not None:
            return self.drive_freq
        return params.omega2 + params.k12 * (self.n0 - 1)

    def tones(self, params: SystemParams) -> list[Tone]:
        return [Tone("bs", self.pump_amp, transition_detuning(params, self.pump_transition())),
                Tone("bs", self.cool_amp, transition_detuning(params, self.cool_transition()))]

    def hamiltonian(self, params: SystemParams, trunc: Truncation) -> DrivenHamiltonian:
        anc = (self.eps, self.ancilla_frequency(params)) if self.eps else None
        return DrivenHamiltonian(params, trunc, self.tones(params), ancilla_drive=anc)

    def hierarchy_warnings(self) -> list[str]:
        out = []
        if not self.noise.kappa2 > 10 * self.pump_amp:
            out.append("kappa2 is not >> pump coupling (needs > 10x)")
        if not min(self.pump_amp, self.cool_amp) > 10 * self.noise.kappa1:
            out.append("pump/cool couplings are not >> kappa1 (needs > 10x)")
        return out


@dataclass
class StabilizationResult:
    sim: SimResult
    mode1_populations: np.ndarray      # (n_samples, nmax1 + 1)
    target_fidelity: np.ndarray        # P(n1 = n0) per sample
    warnings: list[str]

    @property
    def steady_state_fidelity(self) -> float:
        return float(self.target_fidelity[-1])


def stabilization_run(config: StabilizationConfig, params: SystemParams, trunc: Truncation,
                      t_final: float, sample_dt: float | None = None,
                      rho0: np.ndarray | None = None) -> StabilizationResult:
    """Lindblad evolution of the engineered-dissipation scheme (TMS gate off).

    When every tone frequency is an integer multiple of a common base
    frequency the generator is periodic and the run is stroboscopic: one
    period is integrated exactly and then repeated.
    """
    warns = config.hierarchy_warnings()
    for w in warns:
        warnings.warn(w, stacklevel=2)
    ham = config.hamiltonian(params, trunc)
    rho = basis_ket((0, 0), trunc) if rho0 is None else rho0
    rho = to_density(rho)
    fid = lambda s: float(np.real(reduced_state(s, 1, trunc)[config.n0, config.n0]))
    period = _common_period([t.freq for t in ham.tones]
                            + ([ham.ancilla_drive[1]] if ham.ancilla_drive else []))
    if period is not None:
        sim = evolve_lindblad_periodic(ham, rho, config.noise, period, t_final, trunc=trunc,
                                       sample_dt=sample_dt, fidelity_fn=fid)
    else:
        sim = evolve_lindblad(ham, rho, config.noise, (0.0, t_final), trunc=trunc,
                              sample_dt=sample_dt, fidelity_fn=fid)
    d1, d2 = trunc.shape
    p1 = sim.all_populations.reshape(-1, d1, d2).sum(axis=2)
    return StabilizationResult(sim, p1, p1[:, config.n0], warns)


def _common_period(freqs: Sequence[float], max_harmonic: int = 64) -> float | None:
    """Period 2 pi / w0 shared by all frequencies (integer multiples of w0), if any."""
    nz = [abs(f) for f in freqs if abs(f) > 1e-12]
    if not nz:
        return None
    base = min(nz)
    for k in range(1, max_harmonic + 1):
        w0 = base / k
        if all(abs(f / w0 - round(f / w0)) < 1e-9 * max(1.0, f / w0) for f in nz):
            return 2 * math.pi / w0
    return None
