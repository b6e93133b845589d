"""Batch front-end: model-file ingestion, solves, sweeps, verification runs
and the efficiency demo.

Model files are JSON with three blocks::

    {
      "economy": {
        "agenda_setter_type": 0.5,
        "agent_types": [0.8],
        "quota": 2,
        "outside_g": 0.0,
        "distributions": {"family": "uniform", "lo": 0.0, "hi": 1.0},
        "technology": {"family": "log"},
        "reservation": {"family": "linear"},
        "discount": 0.9,            // optional
        "horizon": 3                // optional
      },
      "solver": {"seed": 0, "tau_bar": 0.0, "grid_size": 41, "tolerance": 1e-8},
      "output": {"out": "solution.json", "format": "json"}
    }

``distributions`` is one spec applied to every agent or a list with one spec
per agent. Families: uniform(lo, hi), truncated_exponential(rate, lo, hi),
truncated_normal(mu, sigma, lo, hi). Technologies: log, power(alpha).
Reservations: linear, zero, quadratic_share(slope, curve),
negative_slope(level, slope).

Exit codes: 0 success, 2 model-file parse error, 3 validation or
precondition failure, 4 oracle or verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .model import (
    Economy,
    InvalidEconomy,
    ModelError,
    linear_reservation,
    log_technology,
    negative_slope_reservation,
    power_technology,
    quadratic_share_reservation,
    truncated_exponential,
    truncated_normal,
    uniform,
    validate_economy,
    zero_reservation,
)
from .regimes import solve, solve_stochastic_coalition
from .solver_core import SolverError
from .transfers import agenda_setter_payoff
from .verify import vcg_demo, verify_solution

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_ORACLE = 4

FLOAT_FMT = "%.17g"


class ModelFileError(ModelError):
    """Malformed model file; carries the offending field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _need(block: dict, field: str, path: str):
    if field not in block:
        raise ModelFileError(f"{path}.{field}", "missing required field")
    return block[field]


def _build_distribution(spec: dict, path: str):
    family = _need(spec, "family", path)
    try:
        if family == "uniform":
            return uniform(spec.get("lo", 0.0), spec.get("hi", 1.0))
        if family == "truncated_exponential":
            return truncated_exponential(_need(spec, "rate", path),
                                         spec.get("lo", 0.0), spec.get("hi", 1.0))
        if family == "truncated_normal":
            return truncated_normal(_need(spec, "mu", path), _need(spec, "sigma", path),
                                    spec.get("lo", 0.0), spec.get("hi", 1.0))
    except ModelFileError:
        raise
    except ModelError as exc:
        raise ModelFileError(path, str(exc)) from exc
    raise ModelFileError(f"{path}.family", f"unknown distribution family {family!r}")


def _build_technology(spec: dict, path: str):
    family = _need(spec, "family", path)
    if family == "log":
        return log_technology()
    if family == "power":
        return power_technology(_need(spec, "alpha", path))
    raise ModelFileError(f"{path}.family", f"unknown technology family {family!r}")


def _build_reservation(spec: dict, tech, n: int, path: str):
    family = _need(spec, "family", path)
    if family == "linear":
        return linear_reservation(tech, n)
    if family == "zero":
        return zero_reservation()
    if family == "quadratic_share":
        return quadratic_share_reservation(tech, _need(spec, "slope", path),
                                           _need(spec, "curve", path))
    if family == "negative_slope":
        return negative_slope_reservation(tech, _need(spec, "level", path),
                                          _need(spec, "slope", path))
    raise ModelFileError(f"{path}.family", f"unknown reservation family {family!r}")


def load_model(path: str):
    """Parse a model file into (economy, solver options, output options)."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ModelFileError(path, f"cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFileError(path, f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ModelFileError("$", "top level must be an object")

    eco = _need(raw, "economy", "$")
    agent_types = _need(eco, "agent_types", "economy")
    if not isinstance(agent_types, list):
        raise ModelFileError("economy.agent_types", "must be a list of types")
    n = len(agent_types) + 1

    dist_spec = _need(eco, "distributions", "economy")
    if isinstance(dist_spec, dict):
        dists = (_build_distribution(dist_spec, "economy.distributions"),) * len(agent_types)
    else:
        dists = tuple(
            _build_distribution(s, f"economy.distributions[{k}]")
            for k, s in enumerate(dist_spec))

    tech = _build_technology(_need(eco, "technology", "economy"), "economy.technology")
    reservation = _build_reservation(
        _need(eco, "reservation", "economy"), tech, n, "economy.reservation")

    try:
        econ = Economy(
            agenda_setter_type=_need(eco, "agenda_setter_type", "economy"),
            agent_types=tuple(agent_types),
            distributions=dists,
            tech=tech,
            reservation=reservation,
            quota=_need(eco, "quota", "economy"),
            outside_g=_need(eco, "outside_g", "economy"),
            discount=eco.get("discount"),
            horizon=eco.get("horizon"),
        )
    except (ModelFileError, InvalidEconomy):
        raise
    except (TypeError, ValueError) as exc:
        raise ModelFileError("economy", str(exc)) from exc

    solver = raw.get("solver", {})
    output = raw.get("output", {})
    return econ, solver, output


def _thread_count() -> int:
    raw = os.environ.get("MECH_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap >= 1:
        return cap
    return min(4, os.cpu_count() or 1)


def _float_str(x: float) -> str:
    return FLOAT_FMT % float(x)


def _solution_record(econ, solution, oracle) -> dict:
    return {
        "g_star": solution.g_star,
        "regime": solution.regime.value,
        "coalition": sorted(solution.coalition),
        "excluded": sorted(solution.excluded),
        "bunched": sorted(solution.bunched),
        "cutoff_types": list(solution.cutoff_types),
        "transfers": list(solution.transfers),
        "thresholds": {"g_low": solution.thresholds.g_low,
                       "g_high": solution.thresholds.g_high},
        "thresholds_raw": {"g_low": solution.thresholds_raw.g_low,
                           "g_high": solution.thresholds_raw.g_high},
        "gamma": solution.gamma.describe(),
        "partition": {
            "K": sorted(solution.partition.K),
            "L": sorted(solution.partition.L),
            "M": sorted(solution.partition.M),
        },
        "payoff": agenda_setter_payoff(econ, solution),
        "economy": {
            "n": econ.n,
            "quota": econ.quota,
            "outside_g": econ.outside_g,
            "agenda_setter_type": econ.agenda_setter_type,
            "agent_types": list(econ.agent_types),
        },
        "oracle": {
            "passed": oracle.passed,
            "dsic_ok": oracle.dsic_ok,
            "monotone_ok": oracle.monotone_ok,
            "participation_ok": oracle.participation_ok,
            "budget_slack": oracle.budget_slack,
            "tolerance": oracle.tolerance,
            "grid_size": oracle.grid_size,
            "summary": oracle.summary(),
        },
        "notes": list(solution.notes),
    }


def _write_text(path: str | None, text: str):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _validation_exit(econ) -> int | None:
    report = validate_economy(econ)
    if not report.passed:
        names = ", ".join(c.name for c in report.failures())
        print(f"validation failed: {names}", file=sys.stderr)
        return EXIT_VALIDATION
    return None


def cmd_solve(args) -> int:
    econ, solver_opts, output = load_model(args.model)
    code = _validation_exit(econ)
    if code is not None:
        return code
    seed = args.seed if args.seed is not None else solver_opts.get("seed")
    tau_bar = args.tau_bar if args.tau_bar is not None else solver_opts.get("tau_bar", 0.0)
    if seed is not None:
        # stochastic-coalition variant: incentive constraints hold inside
        # the drawn coalition only, so the oracle scans its members
        solution = solve_stochastic_coalition(econ, int(seed), float(tau_bar))
        oracle_agents = sorted(solution.coalition - {0})
    else:
        solution = solve(econ)
        oracle_agents = None
    oracle = verify_solution(econ, solution,
                             grid_size=int(solver_opts.get("grid_size", 41)),
                             tol=float(solver_opts.get("tolerance", 1e-8)),
                             agents=oracle_agents)
    record = _solution_record(econ, solution, oracle)
    out = args.out or output.get("out")
    _write_text(out, json.dumps(record, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if oracle.passed else EXIT_ORACLE


SWEEP_COLUMNS = ("g_circ", "status", "g_star", "regime", "coalition", "excluded",
                 "g_low", "g_high", "payoff")


def _parse_grid(spec: str):
    try:
        start, stop, count = spec.split(":")
        start, stop, count = float(start), float(stop), int(count)
    except ValueError as exc:
        raise ModelFileError("--grid", f"expected start:stop:count, got {spec!r}") from exc
    if count < 1 or stop < start:
        raise ModelFileError("--grid", "need stop >= start and count >= 1")
    if count == 1:
        return [start]
    step = (stop - start) / (count - 1)
    return [start + k * step for k in range(count)]


def _sweep_row(econ, g_circ):
    try:
        sol = solve(econ.with_outside_g(g_circ))
    except (SolverError, InvalidEconomy) as exc:
        return {"g_circ": g_circ, "status": f"error:{type(exc).__name__}"}
    return {
        "g_circ": g_circ,
        "status": "ok",
        "g_star": sol.g_star,
        "regime": sol.regime.value,
        "coalition": " ".join(str(i) for i in sorted(sol.coalition)),
        "excluded": " ".join(str(i) for i in sorted(sol.excluded)),
        "g_low": sol.thresholds.g_low,
        "g_high": sol.thresholds.g_high,
        "payoff": agenda_setter_payoff(econ.with_outside_g(g_circ), sol),
    }


def _segments(rows):
    """Compress sweep rows into flat/moving segments plus jump locations."""
    segments = []
    jumps = []
    current = None
    prev = None
    for row in rows:
        if row["status"] != "ok":
            current = None
            prev = None
            continue
        g0, gs = row["g_circ"], row["g_star"]
        if prev is not None:
            dg = gs - prev["g_star"]
            span = g0 - prev["g_circ"]
            if abs(dg) > 2.0 * span + 1e-9:
                jumps.append({"g_circ": g0, "from": prev["g_star"], "to": gs,
                              "direction": "down" if dg < 0 else "up"})
                current = None
        if current is not None and current["regime"] == row["regime"] and (
                abs(gs - current["stop_level"]) <= 2.0 * (g0 - current["stop"]) + 1e-9):
            current.update(stop=g0, stop_level=gs)
        else:
            current = {"start": g0, "stop": g0, "regime": row["regime"],
                       "start_level": gs, "stop_level": gs}
            segments.append(current)
        prev = row
    for seg in segments:
        seg["kind"] = "flat" if abs(seg["stop_level"] - seg["start_level"]) <= 1e-9 else "moving"
    return segments, jumps


def cmd_sweep(args) -> int:
    econ, _solver_opts, output = load_model(args.model)
    code = _validation_exit(econ)
    if code is not None:
        return code
    grid = _parse_grid(args.grid)

    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        rows = list(pool.map(lambda g: _sweep_row(econ, g), grid))

    fmt = args.format or output.get("format", "csv")
    if fmt == "json":
        body = json.dumps({"rows": rows}, indent=2, sort_keys=True) + "\n"
    else:
        lines = [",".join(SWEEP_COLUMNS)]
        for row in rows:
            cells = []
            for col in SWEEP_COLUMNS:
                val = row.get(col, "")
                cells.append(_float_str(val) if isinstance(val, float) else str(val))
            lines.append(",".join(cells))
        body = "\n".join(lines) + "\n"
    out = args.out or output.get("out")
    _write_text(out, body)

    segments, jumps = _segments(rows)
    plot_path = args.plot_data or (out + ".segments.json" if out else None)
    plot_payload = json.dumps({"segments": segments, "jumps": jumps},
                              indent=2, sort_keys=True) + "\n"
    if plot_path:
        _write_text(plot_path, plot_payload)
    elif not out:
        sys.stdout.write(plot_payload)

    if any(row["status"] != "ok" for row in rows):
        return EXIT_ORACLE
    return EXIT_OK


def cmd_verify(args) -> int:
    econ, solver_opts, _output = load_model(args.model)
    try:
        with open(args.solution) as fh:
            stored = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read solution: {exc}", file=sys.stderr)
        return EXIT_PARSE

    eco = stored.get("economy", {})
    if (eco.get("n") != econ.n or eco.get("quota") != econ.quota
            or list(eco.get("agent_types", [])) != list(econ.agent_types)
            or abs(float(eco.get("outside_g", -1)) - econ.outside_g) > 1e-12):
        print("solution does not match the model economy", file=sys.stderr)
        return EXIT_VALIDATION

    tol = float(solver_opts.get("tolerance", 1e-8))
    grid_size = int(solver_opts.get("grid_size", 41))
    solution = solve(econ)
    problems = []

    stored_g = float(stored.get("g_star", float("nan")))
    if abs(stored_g - solution.g_star) > 1e-6:
        problems.append(f"g_star mismatch: stored {stored_g}, resolved {solution.g_star}")

    stored_t = [float(t) for t in stored.get("transfers", [])]
    if len(stored_t) != econ.n:
        problems.append(f"transfers: expected {econ.n} entries, got {len(stored_t)}")
    else:
        budget = sum(stored_t) - stored_g
        if stored.get("regime") != "outside_option" and budget < -tol:
            problems.append(f"budget violation: transfers fall short by {-budget:.3g}")
        for sched in solution.schedules:
            i = sched.agent
            expected = float(sched.transfer(econ.type_of(i)))
            if abs(stored_t[i] - expected) > max(10 * tol, 1e-7):
                problems.append(
                    f"agent {i}: stored transfer {stored_t[i]:.12g} breaks the "
                    f"incentive schedule (expected {expected:.12g})")

    oracle = verify_solution(econ, solution, grid_size=grid_size, tol=tol)
    if not oracle.passed:
        problems.append(oracle.summary())

    if problems:
        print("; ".join(problems), file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def cmd_vcg(args) -> int:
    econ, _solver_opts, output = load_model(args.model)
    ladder = [args.epsilon] if args.epsilon is not None else [1e-2, 1e-3, 1e-4]
    try:
        rows = []
        for eps in ladder:
            rep = vcg_demo(econ, eps)
            rows.append({
                "epsilon": eps,
                "g_efficient": rep.g_efficient,
                "deficit": rep.deficit,
                "perturbation_gain": rep.perturbation_gain,
                "gain_over_epsilon": rep.perturbation_gain / eps if eps else 0.0,
            })
    except (InvalidEconomy, ModelError) as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = args.out or output.get("out")
    _write_text(out, json.dumps({"rows": rows}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agendamech",
        description="Solve and verify agenda-setter public-good mechanisms.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one economy and emit a record")
    p_solve.add_argument("--model", required=True)
    p_solve.add_argument("--out", default=None)
    p_solve.add_argument("--seed", type=int, default=None,
                         help="draw a random coalition with this seed")
    p_solve.add_argument("--tau-bar", type=float, default=None,
                         help="flat tax on agents outside a drawn coalition")
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="re-solve over an outside-option grid")
    p_sweep.add_argument("--model", required=True)
    p_sweep.add_argument("--grid", required=True, help="start:stop:count")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--plot-data", default=None)
    p_sweep.add_argument("--format", choices=("csv", "json"), default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="re-run the oracle on a stored solution")
    p_verify.add_argument("--model", required=True)
    p_verify.add_argument("--solution", required=True)
    p_verify.set_defaults(func=cmd_verify)

    p_vcg = sub.add_parser("vcg", help="efficiency benchmark: deficit and gain ladder")
    p_vcg.add_argument("--model", required=True)
    p_vcg.add_argument("--epsilon", type=float, default=None)
    p_vcg.add_argument("--out", default=None)
    p_vcg.set_defaults(func=cmd_vcg)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelFileError as exc:
        print(f"model file error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InvalidEconomy as exc:
        print(f"invalid economy: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
