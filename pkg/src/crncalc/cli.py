"""Command line front end.

Subcommands: compile, simulate, analyze, verify, lemma, sweep, gates.
verify exit codes: 0 all checks pass, 2 usage or domain error, 3 blowup,
4 output not converged, 5 measured speed below the predicted bound.
CRNCALC_DEFAULT_TOL=rtol[,atol] overrides the built-in tolerances when
--rtol/--atol are not given.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import numpy as np

from . import circuit as circ
from . import rates as rt
from . import simulate as sim
from .crn import FormatError, parse_network
from .gates import DomainError, SpeedBound, catalogue

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BLOWUP = 3
EXIT_NOT_CONVERGED = 4
EXIT_SPEED = 5


def _err(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _default_tols() -> tuple[float, float]:
    raw = os.environ.get("CRNCALC_DEFAULT_TOL")
    if not raw:
        return 1e-10, 1e-12
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    try:
        rtol = float(parts[0])
        atol = float(parts[1]) if len(parts) > 1 else rtol * 1e-2
    except (ValueError, IndexError):
        raise ValueError(f"bad CRNCALC_DEFAULT_TOL {raw!r}; expected rtol[,atol]")
    return rtol, atol


def _sim_config(args, default_t_end: float = 40.0) -> sim.SimConfig:
    rtol, atol = _default_tols()
    return sim.SimConfig(
        t_end=args.t_end if args.t_end is not None else default_t_end,
        sigma=getattr(args, "sigma", 1.0),
        rel_tol=args.rtol if args.rtol is not None else rtol,
        abs_tol=args.atol if args.atol is not None else atol)


def _parse_inputs(pairs: list[str]) -> dict[str, float]:
    values: dict[str, float] = {}
    for chunk in pairs:
        for item in chunk.split(","):
            item = item.strip()
            if not item:
                continue
            if "=" not in item:
                raise ValueError(f"bad input binding {item!r}; expected name=value")
            name, _, raw = item.partition("=")
            try:
                val = float(Fraction(raw))
            except (ValueError, ZeroDivisionError):
                raise ValueError(f"bad numeric value {raw!r} for input {name!r}")
            values[name.strip()] = val
    return values


def _write(path: str | None, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _write_report(path: str | None, report: dict):
    if path:
        _write(path, json.dumps(report, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_compile(args) -> int:
    try:
        prog = circ.compile_expression(args.expr, args.mode)
    except (circ.ParseError, circ.ModeError, ValueError) as e:
        return _err(str(e))
    _write(args.out, circ.format_program(prog))
    return EXIT_OK


def _load_any(path: str):
    """Program text if it has bindings, else a bare network."""
    with open(path) as fh:
        text = fh.read()
    try:
        return circ.load_program(text), None
    except FormatError:
        return None, parse_network(text)


def cmd_simulate(args) -> int:
    try:
        cfg = _sim_config(args)
        inputs = _parse_inputs(args.inputs)
        if args.expr:
            prog = circ.compile_expression(args.expr, args.mode)
            traj = sim.simulate_program(prog, inputs, cfg)
        else:
            prog, net = _load_any(args.crn)
            if prog is not None:
                traj = sim.simulate_program(prog, inputs, cfg)
            else:
                # bare network: --in values are per-species initial values
                traj = sim.integrate_network(net, inputs, cfg)
    except (circ.ParseError, circ.ModeError, FormatError, DomainError,
            ValueError, OSError) as e:
        return _err(str(e))
    _write(args.out, traj.to_csv())
    if traj.termination.status != "completed":
        print(f"note: terminated early: {traj.termination.status} "
              f"at t={traj.termination.time:.6g}"
              + (f" ({traj.termination.species})" if traj.termination.species else ""),
              file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        with open(args.traj) as fh:
            traj = sim.read_trajectory_csv(fh.read())
        species = args.species or (traj.species[0] if len(traj.species) == 1 else None)
        if species is None:
            return _err("--species required for multi-species trajectories")
        floor = args.floor if args.floor is not None else 1e-9
        ceil = args.ceil if args.ceil is not None else 1e-2
    except (ValueError, OSError) as e:
        return _err(str(e))
    report: dict = {"trajectory": args.traj, "species": species,
                    "target": args.target,
                    "termination": traj.termination.status}
    code = EXIT_OK
    try:
        est = rt.estimate_rate(traj, species, args.target, floor, ceil,
                               detrend=args.detrend)
        report["rate"] = {"rho_hat": est.rho_hat, "fit_window": list(est.fit_window),
                          "r_squared": est.r_squared, "samples": est.samples_used}
        print(f"rho_hat = {est.rho_hat:.6g}  window {est.fit_window[0]:.3g}.."
              f"{est.fit_window[1]:.3g}  r^2 = {est.r_squared:.6f}")
    except (rt.EstimationError, rt.NotConvergedError) as e:
        report["rate_error"] = str(e)
        print(f"rate not measurable: {e}")
        code = EXIT_NOT_CONVERGED
    if args.digits:
        try:
            d = rt.digits_time(traj, species, args.target, args.digits)
            report["digits"] = {"n": d.n, "time": d.time}
            print(f"T_{d.n} = {d.time:.6g}")
        except rt.NotConvergedError as e:
            report["digits_error"] = str(e)
            print(f"not converged to {args.digits} digits: {e}")
            code = EXIT_NOT_CONVERGED
    _write_report(args.report, report)
    return code


def _rail_report(traj, rails, targets, floor_rtol, detrend=True):
    """Per-rail final errors and rate estimates (None where not measurable)."""
    out = []
    for sid, tgt in zip(rails, targets):
        entry = {"species": sid, "target": tgt, "final": traj.final(sid),
                 "abs_error": abs(traj.final(sid) - tgt)}
        try:
            est = rt.estimate_rate(traj, sid, tgt,
                                   err_floor=rt.auto_err_floor(tgt, floor_rtol),
                                   detrend=detrend)
            entry["rate"] = {"rho_hat": est.rho_hat,
                             "fit_window": list(est.fit_window),
                             "r_squared": est.r_squared,
                             "samples": est.samples_used}
        except (rt.EstimationError, ValueError) as e:
            entry["rate_error"] = str(e)
        out.append(entry)
    return out


def _finish_verify(args, report: dict, code: int) -> int:
    report["exit_code"] = code
    _write_report(args.report, report)
    return code


def cmd_verify(args) -> int:
    try:
        cfg = _sim_config(args)
        inputs = _parse_inputs(args.inputs)
        circuit = circ.lower_to_circuit(args.expr, args.mode)
        analysis = circ.predict_speed(circuit, inputs)
        prog = circ.flatten(circuit)
    except (circ.ParseError, circ.ModeError, DomainError, ValueError) as e:
        return _err(str(e))
    rails = list(prog.bindings.output)
    targets = list(analysis.output_values)
    bound = SpeedBound(min(analysis.bound.value, 1.0) * cfg.sigma,
                       analysis.bound.case +
                       (f" (sigma={cfg.sigma:g})" if cfg.sigma != 1.0 else ""))
    report = {
        "expression": args.expr, "mode": args.mode, "inputs": inputs,
        "sigma": cfg.sigma, "t_end": cfg.t_end,
        "rtol": cfg.rel_tol, "atol": cfg.abs_tol,
        "predicted_bound": {"value": bound.value, "case": bound.case},
        "target": analysis.output_value,
        "output_species": rails,
    }
    try:
        traj = sim.simulate_program(prog, inputs, cfg)
    except ValueError as e:
        return _err(str(e))
    report["termination"] = {"status": traj.termination.status,
                             "species": traj.termination.species,
                             "time": traj.termination.time}
    report["outputs"] = _rail_report(traj, rails, targets, cfg.rel_tol)
    if args.out:
        _write(args.out, traj.to_csv())
    if args.plot_data:
        _write_plot_data(args.plot_data, traj, rails, targets)
    if traj.termination.status == "blowup":
        print(f"blowup: {traj.termination.species} crossed "
              f"{cfg.blowup_threshold:g} at t={traj.termination.time:.6g}")
        for entry in report["outputs"]:
            line = (f"  {entry['species']} -> {entry['final']:.6g} "
                    f"(target {entry['target']:.6g})")
            if "rate" in entry:
                line += f", rho_hat {entry['rate']['rho_hat']:.4g} up to truncation"
            print(line)
        return _finish_verify(args, report, EXIT_BLOWUP)
    if traj.termination.status == "stiff_failure":
        print(f"integration failed: {traj.termination.detail}", file=sys.stderr)
        return _finish_verify(args, report, EXIT_NOT_CONVERGED)

    thr = 10.0 ** (-args.digits)
    worst_err = max(entry["abs_error"] for entry in report["outputs"])
    report["accuracy"] = {"digits": args.digits, "threshold": thr,
                          "final_abs_error": worst_err}
    if worst_err > thr:
        print(f"not converged: final error {worst_err:.3g} > 1e-{args.digits}")
        return _finish_verify(args, report, EXIT_NOT_CONVERGED)

    measured, verdicts = math.inf, []
    for entry in report["outputs"]:
        if "rate" not in entry:
            print(f"rate not measurable for {entry['species']}: "
                  f"{entry.get('rate_error')}")
            return _finish_verify(args, report, EXIT_NOT_CONVERGED)
        est = rt.RateEstimate(entry["rate"]["rho_hat"],
                              tuple(entry["rate"]["fit_window"]),
                              entry["rate"]["r_squared"],
                              entry["rate"]["samples"])
        v = rt.check_speed(est, bound, args.slack)
        verdicts.append(v)
        measured = min(measured, v.measured)
        entry["verdict"] = {"passed": v.passed, "required": v.required}
    passed = all(v.passed for v in verdicts)
    report["verdict"] = {"passed": passed, "measured": measured,
                         "required": verdicts[0].required, "slack": args.slack}
    target_txt = ", ".join(f"{x:.6g}" for x in targets)
    print(f"target [{target_txt}]  final error {worst_err:.3g}  "
          f"rho_hat {measured:.4g}  bound {bound.value:.4g} [{bound.case}]")
    for v in verdicts:
        print(f"  {v}")
    return _finish_verify(args, report, EXIT_OK if passed else EXIT_SPEED)


def _write_plot_data(path: str, traj, rails, targets):
    lines = ["t," + ",".join(f"ln_err_{sid}" for sid in rails)]
    cols = [np.abs(traj.series(sid) - tgt) for sid, tgt in zip(rails, targets)]
    for i, t in enumerate(traj.times):
        vals = [f"{math.log(c[i]):.8g}" if c[i] > 0 else "" for c in cols]
        lines.append(f"{t:.8g}," + ",".join(vals))
    _write(path, "\n".join(lines) + "\n")


def cmd_lemma(args) -> int:
    try:
        system = sim.ForcedSystem(args.form, sim.parse_forcing(args.g1),
                                  sim.parse_forcing(args.g2), args.m, args.x0)
        pred = rt.forced_prediction(system)
        cfg = _sim_config(args, default_t_end=60.0)
    except (ValueError, rt.PreconditionError) as e:
        return _err(str(e))
    traj = sim.simulate_forced(system, cfg)
    report = {"form": args.form, "g1": args.g1, "g2": args.g2, "m": args.m,
              "x0": args.x0, "family": pred.family,
              "predicted_bound": {"value": pred.bound.value, "case": pred.bound.case},
              "target": pred.target,
              "termination": traj.termination.status}
    if pred.family == "unbounded_growth":
        margin = 0.1
        try:
            rate = rt.growth_log_rate(traj, "x")
        except rt.EstimationError as e:
            return _err(str(e))
        passed = rate >= pred.bound.value - margin
        report["growth"] = {"log_rate": rate, "required": pred.bound.value - margin}
        print(f"growth family: ln(x)/t tail {rate:.4g} vs bound {pred.bound.value:.4g}"
              f" - {margin:g} [{pred.bound.case}]: {'pass' if passed else 'FAIL'}")
        _write_report(args.report, report)
        return EXIT_OK if passed else EXIT_SPEED
    if traj.termination.status == "blowup":
        print(f"blowup at t={traj.termination.time:.6g}")
        _write_report(args.report, report)
        return EXIT_BLOWUP
    try:
        est = rt.estimate_rate(traj, "x", pred.target,
                               err_floor=rt.auto_err_floor(pred.target, cfg.rel_tol),
                               detrend=True)
    except (rt.EstimationError, rt.NotConvergedError) as e:
        report["rate_error"] = str(e)
        print(f"rate not measurable: {e}")
        _write_report(args.report, report)
        return EXIT_NOT_CONVERGED
    v = rt.check_speed(est, pred.bound, args.slack)
    report["rate"] = {"rho_hat": est.rho_hat, "fit_window": list(est.fit_window),
                      "r_squared": est.r_squared}
    report["verdict"] = {"passed": v.passed, "required": v.required}
    print(f"{pred.family}: target {pred.target:.6g}  {v}")
    _write_report(args.report, report)
    return EXIT_OK if v.passed else EXIT_SPEED


# sweep worker kept at module level so ProcessPoolExecutor can pickle it
def _sweep_point(payload) -> dict:
    kind, text, mode, point, cfg_kw, target_expr, species = payload
    cfg = sim.SimConfig(**cfg_kw)
    row = dict(point)
    try:
        if kind == "expr":
            circuit = circ.lower_to_circuit(text, mode)
            analysis = circ.predict_speed(circuit, point)
            prog = circ.flatten(circuit)
            traj = sim.simulate_program(prog, point, cfg)
            rails = list(prog.bindings.output)
            targets = list(analysis.output_values)
        else:
            net = parse_network(text)
            traj = sim.integrate_network(net, point, cfg)
            rails = [species]
            targets = [circ.eval_expr(target_expr, point)]
        row["termination"] = traj.termination.status
        errs, rhos, r2s = [], [], []
        for sid, tgt in zip(rails, targets):
            errs.append(abs(traj.final(sid) - tgt))
            est = rt.estimate_rate(traj, sid, tgt,
                                   err_floor=rt.auto_err_floor(tgt, cfg.rel_tol),
                                   detrend=True)
            rhos.append(est.rho_hat)
            r2s.append(est.r_squared)
        row["target"] = targets[0] if len(targets) == 1 else targets[0] - targets[1]
        row["final_abs_error"] = max(errs)
        row["rho_hat"] = min(rhos)
        row["r_squared"] = min(r2s)
        row["status"] = "ok"
    except (DomainError, rt.EstimationError, rt.NotConvergedError, ValueError) as e:
        row["status"] = f"{type(e).__name__}: {e}"
    return row


def _parse_grid(spec: str) -> list[dict[str, float]]:
    axes: list[tuple[str, list[float]]] = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        name, _, vals = part.partition("=")
        if not vals:
            raise ValueError(f"bad grid axis {part!r}; expected name=v1,v2,...")
        axes.append((name.strip(), [float(Fraction(v.strip())) for v in vals.split(",")]))
    points: list[dict[str, float]] = [{}]
    for name, vals in axes:
        points = [dict(p, **{name: v}) for p in points for v in vals]
    return points if axes else []


def cmd_sweep(args) -> int:
    try:
        points = _parse_grid(args.grid)
        cfg = _sim_config(args)
        cfg_kw = {"t_end": cfg.t_end, "sigma": cfg.sigma,
                  "rel_tol": cfg.rel_tol, "abs_tol": cfg.abs_tol}
        if args.expr:
            payloads = [("expr", args.expr, args.mode, p, cfg_kw, None, None)
                        for p in points]
            # fail fast on an unparseable expression
            circ.parse_expression(args.expr)
        else:
            if not args.target or not args.species:
                return _err("--crn sweeps need --target and --species")
            with open(args.crn) as fh:
                text = fh.read()
            parse_network(text)
            payloads = [("crn", text, args.mode, p, cfg_kw, args.target, args.species)
                        for p in points]
    except (circ.ParseError, FormatError, ValueError, OSError) as e:
        return _err(str(e))
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    var_names = sorted({k for p in points for k in p})
    header = var_names + ["target", "final_abs_error", "rho_hat", "r_squared",
                          "termination", "status"]
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for key in header:
            v = row.get(key, "")
            cells.append(f"{v:.10g}" if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    good = [r["rho_hat"] for r in rows if r.get("status") == "ok"
            and isinstance(r.get("rho_hat"), float) and math.isfinite(r["rho_hat"])]
    if good:
        mean = sum(good) / len(good)
        spread = (max(good) - min(good)) / mean if mean else math.inf
        lines.append(f"# rho_hat over {len(good)} points: mean={mean:.6g} "
                     f"min={min(good):.6g} max={max(good):.6g} spread={spread:.4g}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_gates(_args) -> int:
    sys.stdout.write(catalogue())
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_tol_flags(p):
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--rtol", type=float, default=None)
    p.add_argument("--atol", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crncalc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile an expression to a network")
    p.add_argument("--expr", required=True)
    p.add_argument("--mode", choices=("nonneg", "real"), default="nonneg")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="integrate a program or network")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--expr")
    src.add_argument("--crn", help="program text; bare networks take --in as "
                                   "initial species values")
    p.add_argument("--mode", choices=("nonneg", "real"), default="nonneg")
    p.add_argument("--in", dest="inputs", action="append", default=[],
                   metavar="NAME=VALUE[,...]")
    p.add_argument("--sigma", type=float, default=1.0)
    _add_tol_flags(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="estimate convergence from a trajectory csv")
    p.add_argument("--traj", required=True)
    p.add_argument("--species")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--digits", type=int)
    p.add_argument("--floor", type=float)
    p.add_argument("--ceil", type=float)
    p.add_argument("--detrend", action="store_true",
                   help="prefactor-aware envelope fit instead of the plain slope")
    p.add_argument("--report")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="simulate and check speed against the bound")
    p.add_argument("--expr", required=True)
    p.add_argument("--mode", choices=("nonneg", "real"), default="nonneg")
    p.add_argument("--in", dest="inputs", action="append", default=[],
                   metavar="NAME=VALUE[,...]")
    p.add_argument("--sigma", type=float, default=1.0)
    _add_tol_flags(p)
    p.add_argument("--slack", type=float, default=0.15)
    p.add_argument("--digits", type=int, default=6,
                   help="require final error <= 10^-digits (default 6)")
    p.add_argument("--out", help="also write the trajectory csv here")
    p.add_argument("--report", help="write a json report here")
    p.add_argument("--plot-data", help="write t, ln|error| columns here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("lemma", help="check a forced scalar system against "
                                     "its predicted rate")
    p.add_argument("--form", choices=("linear", "power"), required=True)
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--x0", type=float, default=1.0)
    _add_tol_flags(p)
    p.add_argument("--slack", type=float, default=0.15)
    p.add_argument("--report")
    p.set_defaults(func=cmd_lemma)

    p = sub.add_parser("sweep", help="run a grid of inputs, one row per point")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--expr")
    src.add_argument("--crn", help="bare network file; grid values are "
                                   "initial species values")
    p.add_argument("--mode", choices=("nonneg", "real"), default="nonneg")
    p.add_argument("--grid", required=True, metavar="a=1,2;b=3,4")
    p.add_argument("--target", help="expression for the expected value "
                                    "(--crn sweeps)")
    p.add_argument("--species", help="output species to measure (--crn sweeps)")
    p.add_argument("--sigma", type=float, default=1.0)
    _add_tol_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gates", help="print the gate catalogue")
    p.set_defaults(func=cmd_gates)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except ValueError as e:
        return _err(str(e))


if __name__ == "__main__":
    sys.exit(main())
