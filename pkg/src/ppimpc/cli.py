"""Command-line front end.

    ppimpc synth      --config run.json [--out DIR]
    ppimpc simulate   --config run.json [--artifact A.json] [--out DIR] [--seed S]
    ppimpc montecarlo --config run.json [--artifact A.json] [--out DIR] [--seed S] [--runs M]
    ppimpc verify     --artifact A.json [--out DIR]

Exit codes: 0 success, 1 a computation or certificate failed, 2 bad input.
Failures are reported on stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .artifact import all_passed, load_result, save_result, verify_result
from .config import RunConfig, load_config
from .errors import ControllerFailureError, InvalidArgumentError, PpiMpcError
from .mpc import build_ocp
from .sim import TrajectoryLog, monte_carlo, simulate_closed_loop
from .synthesis import synthesize

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

ARTIFACT_NAME = "artifact.json"
TRAJECTORY_NAME = "trajectory.csv"
REPORT_NAME = "montecarlo.json"
RATES_NAME = "montecarlo_rates.csv"
VERIFY_NAME = "verify.json"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def trajectory_rows(log: TrajectoryLog):
    n, m = log.x.shape[1], log.u.shape[1]
    header = ["k"] + [f"{name}{i + 1}" for name, dim in (("x", n), ("z", n), ("s", n)) for i in range(dim)]
    header += [f"{name}{i + 1}" for name in ("u", "v") for i in range(m)] + ["value", "feasible"]
    rows = []
    for k in range(log.x.shape[0]):
        rows.append([k, *log.x[k], *log.z[k], *log.s[k], *log.u[k], *log.v[k], log.values[k], bool(log.feasible[k])])
    return header, rows


class _Failure(Exception):
    """Non-exception failure (e.g. a certificate that did not pass)."""

    def __init__(self, kind, message, **extra):
        super().__init__(message)
        self.kind = kind
        self.extra = extra


def _error_line(exc) -> str:
    if isinstance(exc, _Failure):
        doc = {"type": exc.kind, "message": str(exc), **exc.extra}
    else:
        doc = {"type": type(exc).__name__, "message": str(exc)}
        for attr in ("row", "constraint", "step", "max_violation"):
            val = getattr(exc, attr, None)
            if val is not None:
                doc[attr] = val
    return json.dumps(doc, allow_nan=False, default=str)


def _synthesize(cfg: RunConfig):
    c = cfg.controller
    return synthesize(cfg.model, K=c.K, Q=c.Q, R=c.R, N=c.N, r=c.r)


def _certified_result(cfg: RunConfig, artifact):
    if artifact is None:
        return _synthesize(cfg)
    res = load_result(artifact)
    checks = verify_result(res)
    if not all_passed(checks):
        bad = sorted(k for k, v in checks.items() if not v["passed"])
        raise _Failure("UncertifiedArtifact", "artifact fails certificates", failed=bad)
    return res


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    res = _synthesize(cfg)
    checks = verify_result(res)
    path = save_result(res, _out_dir(args, cfg) / ARTIFACT_NAME, checks)
    if not all_passed(checks):
        bad = sorted(k for k, v in checks.items() if not v["passed"])
        raise _Failure("CertificateFailure", f"synthesis result written to {path} but fails certificates",
                       failed=bad)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    res = _certified_result(cfg, args.artifact)
    sim = cfg.simulation
    spec = cfg.disturbance_spec(args.seed)
    out = _out_dir(args, cfg) / TRAJECTORY_NAME
    try:
        log = simulate_closed_loop(res, build_ocp(res), sim.x0, sim.T, spec, cfg.controller.init_mode)
    except ControllerFailureError as exc:
        write_csv(out, *trajectory_rows(exc.partial))
        raise
    write_csv(out, *trajectory_rows(log))
    return EXIT_OK


def _finite_or_none(obj):
    """JSON has no NaN or infinity; those become null."""
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_finite_or_none(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def cmd_montecarlo(args) -> int:
    cfg = load_config(args.config)
    res = _certified_result(cfg, args.artifact)
    sim = cfg.simulation
    spec = cfg.disturbance_spec(args.seed)
    runs = sim.M if args.runs is None else args.runs
    if runs < 1:
        raise InvalidArgumentError("--runs must be at least 1")
    rep = monte_carlo(res, build_ocp(res), sim.x0, sim.T, runs, spec, sim.window, cfg.controller.init_mode)

    outdir = _out_dir(args, cfg)
    doc = rep.summary()
    doc["per_step"] = {
        "state_violation": rep.state_violation,
        "input_violation": rep.input_violation,
        "chebyshev_coverage": rep.chebyshev_coverage,
        "ppi_residence": rep.ppi_residence,
    }
    _write_json(outdir / REPORT_NAME, _finite_or_none(doc))
    nz = rep.nominal.z
    header = ["k", "state_violation", "input_violation", "chebyshev_coverage", "ppi_residence"]
    header += [f"z{i + 1}" for i in range(nz.shape[1])]
    rows = [[k, rep.state_violation[k], rep.input_violation[k], rep.chebyshev_coverage[k], rep.ppi_residence[k],
             *nz[k]] for k in range(rep.horizon + 1)]
    write_csv(outdir / RATES_NAME, header, rows)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.artifact is None:
        raise InvalidArgumentError("verify needs --artifact")
    res = load_result(args.artifact)
    checks = verify_result(res)
    ok = all_passed(checks)
    doc = {"passed": ok, "checks": checks}
    if args.out is not None:
        _write_json(Path(args.out) / VERIFY_NAME, doc)
    for name, c in checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name} min_slack={c['min_slack']:.3e}")
    if not ok:
        bad = [k for k, v in checks.items() if not v["passed"]]
        raise _Failure("CertificateFailure", "artifact fails certificates", failed=bad)
    return EXIT_OK


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out if args.out is not None else cfg.output.directory)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppimpc", description="Stochastic tube MPC with polytopic PPI sets.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("synth", cmd_synth, "synthesize and certify the controller"),
        ("simulate", cmd_simulate, "single closed-loop run to CSV"),
        ("montecarlo", cmd_montecarlo, "Monte Carlo violation and coverage statistics"),
        ("verify", cmd_verify, "re-check every certificate of an artifact"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", required=name != "verify", help="run configuration (JSON)")
        sp.add_argument("--artifact", help="synthesis artifact (JSON)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="disturbance seed override")
        sp.add_argument("--runs", type=int, help="number of Monte Carlo runs override")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgumentError, FileNotFoundError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return EXIT_USAGE
    except (PpiMpcError, _Failure) as exc:
        print(_error_line(exc), file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
