"""Command-line front end.

Subcommands: spectrum-map, run, sweep, magnus-report, stabilize. Each reads an
optional JSON config (``--config``); explicit flags override config fields.
Frequencies are given in MHz and loss rates in kHz (ordinary frequency, the
2 pi factor is applied on load).
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import magnus, protocols
from .evolve import EvolutionError, NoiseParams, reduced_state, wigner
from .hilbert import SystemParams, Truncation, fig3_params, fig5_params, mhz, to_mhz
from .spectrum import (DegeneracyError, Transition, best_rational_approximations,
                       degeneracy_map, selectivity_margin)

log = logging.getLogger("kerrsel")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_DEGENERACY = 4
EXIT_EVOLUTION = 5

SWEEP_SCHEMA = "# kerrsel sweep v1"
STAB_SCHEMA = "# kerrsel stabilization v1"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a subcommand needs; frequencies already in rad/us."""

    params: SystemParams = field(default_factory=fig3_params)
    params_given: bool = False
    truncation: Truncation | None = None
    noise: NoiseParams | None = None
    protocol: str = "noon"
    m: int = 4
    target: Transition | None = None
    window: int = 6
    sweep: dict = field(default_factory=dict)
    output: Path = Path("kerrsel-out")
    seed: int = 0        # reserved; every run is deterministic
    wigner: bool = False
    extra: dict = field(default_factory=dict)


_PARAM_KEYS = ("k1", "k2", "j", "g", "k12", "omega1", "omega2")


def _params_from(d: dict) -> SystemParams:
    preset = d.get("preset")
    base = fig5_params() if preset == "fig5" else fig3_params()
    vals = base.to_mhz()
    for key in _PARAM_KEYS:
        if f"{key}_mhz" in d:
            vals[key] = float(d[f"{key}_mhz"])
    if "k2_mhz" not in d and "ratio" in d:
        vals["k2"] = vals["k1"] / float(d["ratio"])
    for k, v in vals.items():
        if not math.isfinite(v):
            raise ConfigError(f"parameter {k} is not finite")
    return SystemParams.from_mhz(**vals)


def load_config(args: argparse.Namespace) -> RunConfig:
    raw = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    pd = dict(raw.get("params", {}))
    for key in _PARAM_KEYS:
        v = getattr(args, f"{key}_mhz", None)
        if v is not None:
            pd[f"{key}_mhz"] = v
    if getattr(args, "ratio", None) is not None:
        pd["ratio"] = args.ratio
        pd.pop("k2_mhz", None)
    if getattr(args, "preset", None):
        pd["preset"] = args.preset
    cfg = RunConfig(params_given=bool(pd))
    try:
        cfg.params = _params_from(pd)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    trunc = getattr(args, "trunc", None) or raw.get("truncation")
    if trunc is not None:
        try:
            cfg.truncation = Truncation(int(trunc[0]), int(trunc[1]))
        except (ValueError, IndexError, TypeError) as exc:
            raise ConfigError(f"bad truncation {trunc}: {exc}") from exc
    nd = dict(raw.get("noise", {}))
    if getattr(args, "kappa_khz", None) is not None and not isinstance(args.kappa_khz, list):
        nd["kappa_khz"] = args.kappa_khz
    if getattr(args, "nth", None) is not None and not isinstance(args.nth, list):
        nd["nth"] = args.nth
    if nd:
        try:
            cfg.noise = NoiseParams.from_khz(float(nd.get("kappa_khz", 0.0)),
                                             float(nd.get("nth", 0.0)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    cfg.protocol = getattr(args, "protocol", None) or raw.get("protocol", cfg.protocol)
    cfg.m = int(getattr(args, "m", None) or raw.get("m", cfg.m))
    tgt = getattr(args, "target", None) or raw.get("target")
    if tgt is not None:
        try:
            cfg.target = Transition.parse(tgt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    cfg.window = int(getattr(args, "window", None) or raw.get("window", cfg.window))
    cfg.sweep = dict(raw.get("sweep", {}))
    for axis in ("kappa_khz", "nth", "kerr_scale", "m"):
        v = getattr(args, f"sweep_{axis}", None)
        if v is not None:
            cfg.sweep[axis] = v
    cfg.output = Path(getattr(args, "out", None) or raw.get("output", cfg.output))
    cfg.seed = int(raw.get("seed", 0))
    cfg.wigner = bool(getattr(args, "wigner", False) or raw.get("wigner", False))
    cfg.extra = raw
    return cfg


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n",
                    encoding="utf-8")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def _threads() -> int:
    try:
        n = int(os.environ.get("KERRSEL_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else min(8, os.cpu_count() or 1)


# -- commands -----------------------------------------------------------------

def cmd_spectrum_map(cfg: RunConfig) -> int:
    target = cfg.target or Transition.parse("BS(10,12)")
    dm = degeneracy_map(cfg.params, target, cfg.window)
    sel = selectivity_margin(cfg.params, target, cfg.window)
    ratio = cfg.params.k1 / cfg.params.k2 if cfg.params.k2 else math.inf
    witnesses = (best_rational_approximations(ratio, max(cfg.window, 1))
                 if math.isfinite(ratio) and ratio > 0 else [])
    cfg.output.mkdir(parents=True, exist_ok=True)
    dm.to_csv(cfg.output / "degeneracy_map.csv")
    summary = {
        "target": str(target),
        "window": cfg.window,
        "kerr_ratio": _finite_or_none(ratio),
        "min_off_target_MHz": to_mhz(dm.min_off_target()),
        "exact_zeros": [list(z) for z in dm.zeros()],
        "crowded": [list(c) for c in dm.crowded()],
        "worst_selectivity_ratio": _finite_or_none(sel.ratio),
        "worst_transition": str(sel.worst) if sel.worst else None,
        "cross_kind_flagged": [str(t) for t in sel.tms_flagged],
        "rational_witnesses": [{"p": w.p, "q": w.q, "error": w.error,
                                "first_degeneracy": list(w.first_degeneracy)} for w in witnesses],
    }
    _write_json(cfg.output / "spectrum_summary.json", summary)
    print(json.dumps({"exact_zeros": summary["exact_zeros"],
                      "min_off_target_MHz": summary["min_off_target_MHz"]}))
    return EXIT_OK


def _protocol_spec(cfg: RunConfig, m: int | None = None) -> protocols.ProtocolSpec:
    name = cfg.protocol
    if name in protocols.PROTOCOLS:
        return protocols.PROTOCOLS[name](cfg.params, m if m is not None else cfg.m)
    path = Path(name)
    if path.is_file():
        try:
            return protocols.ProtocolSpec.from_json(path.read_text(encoding="utf-8"))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid protocol document {path}: {exc}") from exc
    raise ConfigError(f"unknown protocol {name!r} (choose {sorted(protocols.PROTOCOLS)} "
                      f"or a JSON file)")


def _execute(cfg: RunConfig, spec, params, noise) -> protocols.ProtocolResult:
    if spec.name == "binomial" and cfg.protocol == "binomial":
        return protocols.run_binomial(params, cfg.truncation, noise=noise)
    return protocols.run_protocol(spec, params, cfg.truncation, noise=noise)


def cmd_run(cfg: RunConfig, check_convergence: bool = False) -> int:
    spec = _protocol_spec(cfg)
    res = _execute(cfg, spec, cfg.params, cfg.noise)
    cfg.output.mkdir(parents=True, exist_ok=True)
    res.sim.to_csv(cfg.output / "dynamics.csv")
    summary = res.summary()
    summary["truncation"] = list(res.sim.trunc.shape)
    summary["params_MHz"] = cfg.params.to_mhz()
    if check_convergence:
        bigger = protocols.run_protocol(spec, cfg.params, res.sim.trunc.padded(2), noise=cfg.noise)
        summary["convergence_delta"] = abs(bigger.final_fidelity - res.final_fidelity)
    if cfg.wigner:
        rho1 = reduced_state(res.sim.final_state, 1, res.sim.trunc)
        xs = np.linspace(-3.5, 3.5, 71)
        wigner(rho1, xs).to_csv(cfg.output / "wigner_mode1.csv")
    _write_json(cfg.output / "result.json", summary)
    print(json.dumps({"final_fidelity": res.final_fidelity, "peak_fidelity": res.peak_fidelity,
                      "flags": res.flags}))
    if not res.converged:
        print(f"error: {res.flags[0]}", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _sweep_cell(cfg: RunConfig, cell: dict) -> dict:
    row = dict(cell)
    try:
        params = cfg.params
        if "kerr_scale" in cell:
            base = cfg.params if cfg.params_given else fig5_params()
            params = base.with_kerr_scale(cell["kerr_scale"])
        noise = None
        if cell.get("kappa_khz", 0.0) > 0 or cell.get("nth", 0.0) > 0:
            noise = NoiseParams.from_khz(cell.get("kappa_khz", 0.0), cell.get("nth", 0.0))
        spec = _protocol_spec(cfg, cell.get("m"))
        res = _execute(cfg, spec, params, noise)
        k = int(np.argmax(res.sim.fidelity))
        row.update(peak_fidelity=res.peak_fidelity, final_fidelity=res.final_fidelity,
                   optimal_time_us=float(res.sim.times[k]), total_time_us=res.total_time,
                   status="ok" if res.converged else "non-converged", error="")
    except (DegeneracyError, EvolutionError, ValueError) as exc:
        row.update(peak_fidelity=math.nan, final_fidelity=math.nan, optimal_time_us=math.nan,
                   total_time_us=math.nan, status="failed", error=str(exc))
    return row


def cmd_sweep(cfg: RunConfig) -> int:
    axes = {k: list(v) for k, v in cfg.sweep.items() if k in ("kappa_khz", "nth", "kerr_scale", "m")}
    if not axes or any(len(v) == 0 for v in axes.values()):
        raise ConfigError("sweep needs at least one non-empty axis (kappa_khz, nth, kerr_scale, m)")
    names = sorted(axes)
    cells = [dict(zip(names, vals)) for vals in itertools.product(*(axes[n] for n in names))]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(lambda c: _sweep_cell(cfg, c), cells))
    cfg.output.mkdir(parents=True, exist_ok=True)
    cols = names + ["peak_fidelity", "final_fidelity", "optimal_time_us", "total_time_us",
                    "status", "error"]
    with open(cfg.output / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(SWEEP_SCHEMA + "\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([f"{r[c]:.12g}" if isinstance(r[c], float) else r[c] for c in cols])
    print(json.dumps({"cells": len(rows), "failed": sum(r["status"] == "failed" for r in rows)}))
    return EXIT_OK


def cmd_magnus_report(cfg: RunConfig) -> int:
    target = cfg.target or Transition.parse("BS(1,1)")
    trunc = cfg.truncation or Truncation(target.final.n1 + 4,
                                         max(target.initial.n2, target.final.n2) + 4)
    rep = magnus.effective_report(cfg.params, target, trunc)
    cfg.output.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.output / "magnus_report.json", rep.to_dict())
    print(magnus.budget_json(rep.budget))
    return EXIT_OK


def cmd_stabilize(cfg: RunConfig, args: argparse.Namespace) -> int:
    raw = cfg.extra.get("stabilization", {})

    def pick(name, default):
        v = getattr(args, name, None)
        return v if v is not None else raw.get(name, default)

    noise = NoiseParams(kappa1=mhz(pick("kappa1_khz", 1.0) * 1e-3),
                        kappa2=mhz(pick("kappa2_khz", 1000.0) * 1e-3))
    conf = protocols.StabilizationConfig(n0=int(pick("n0", 1)), eps=mhz(pick("eps_mhz", 0.4)),
                                         pump_amp=mhz(pick("pump_mhz", 0.08)),
                                         cool_amp=mhz(pick("cool_mhz", 0.3)), noise=noise)
    params = cfg.params
    if not cfg.params_given:
        params = replace(params, k12=mhz(20.0))
    trunc = cfg.truncation or Truncation(conf.n0 + 3, 2)
    t_final = float(pick("t_final_us", 200.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = protocols.stabilization_run(conf, params, trunc, t_final,
                                          sample_dt=float(pick("sample_dt_us", 1.0)))
    cfg.output.mkdir(parents=True, exist_ok=True)
    with open(cfg.output / "stabilization.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(STAB_SCHEMA + "\n")
        w = csv.writer(fh)
        w.writerow(["time_us"] + [f"p_n1_{k}" for k in range(trunc.nmax1 + 1)])
        for t, row in zip(res.sim.times, res.mode1_populations):
            w.writerow([f"{t:.12g}"] + [f"{p:.12g}" for p in row])
    _write_json(cfg.output / "stabilization.json",
                {"steady_state_fidelity": res.steady_state_fidelity, "warnings": res.warnings,
                 "n0": conf.n0, "t_final_us": t_final})
    print(json.dumps({"steady_state_fidelity": res.steady_state_fidelity,
                      "warnings": res.warnings}))
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config document")
    p.add_argument("--out", help="output directory")
    p.add_argument("--preset", choices=["fig3", "fig5"], help="base parameter set")
    for key in _PARAM_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}-mhz", dest=f"{key}_mhz", type=float)
    p.add_argument("--ratio", type=float, help="K1/K2 (sets K2 from K1)")
    p.add_argument("--trunc", type=int, nargs=2, metavar=("NMAX1", "NMAX2"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kerrsel", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum-map", help="degeneracy map of a target transition")
    _add_common(p)
    p.add_argument("--target", help='e.g. "BS(10,12)"')
    p.add_argument("--window", type=int)

    p = sub.add_parser("run", help="execute a protocol")
    _add_common(p)
    p.add_argument("--protocol", help="noon | fock | binomial | path to JSON")
    p.add_argument("--m", type=int, help="photon number for the fock ladder")
    p.add_argument("--kappa-khz", type=float)
    p.add_argument("--nth", type=float)
    p.add_argument("--wigner", action="store_true", help="write the mode-1 Wigner grid")
    p.add_argument("--check-convergence", action="store_true")

    p = sub.add_parser("sweep", help="robustness / scaling sweep")
    _add_common(p)
    p.add_argument("--protocol")
    p.add_argument("--m", type=int)
    p.add_argument("--kappa-khz", dest="sweep_kappa_khz", type=float, nargs="+")
    p.add_argument("--nth", dest="sweep_nth", type=float, nargs="+")
    p.add_argument("--kerr-scale", dest="sweep_kerr_scale", type=float, nargs="+")
    p.add_argument("--m-values", dest="sweep_m", type=int, nargs="+")

    p = sub.add_parser("magnus-report", help="effective-Hamiltonian error budget")
    _add_common(p)
    p.add_argument("--target")

    p = sub.add_parser("stabilize", help="dissipative Fock-state stabilization")
    _add_common(p)
    p.add_argument("--n0", type=int)
    p.add_argument("--eps-mhz", type=float)
    p.add_argument("--pump-mhz", type=float)
    p.add_argument("--cool-mhz", type=float)
    p.add_argument("--kappa1-khz", type=float)
    p.add_argument("--kappa2-khz", type=float)
    p.add_argument("--t-final-us", type=float)
    p.add_argument("--sample-dt-us", type=float)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "spectrum-map":
            return cmd_spectrum_map(cfg)
        if args.command == "run":
            return cmd_run(cfg, args.check_convergence)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "magnus-report":
            return cmd_magnus_report(cfg)
        return cmd_stabilize(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegeneracyError as exc:
        print(f"degeneracy error: {exc}", file=sys.stderr)
        return EXIT_DEGENERACY
    except EvolutionError as exc:
        print(f"evolution error: {exc}", file=sys.stderr)
        return EXIT_EVOLUTION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
