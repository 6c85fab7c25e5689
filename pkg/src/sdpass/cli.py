"""Command-line entry point: ``sdpass {simulate,sweep,verify,pch-check}``.

Exit codes: 0 success, 1 verification failure, 2 bad flags, 3 solver or
integrator failure.
"""
import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from pathlib import Path
from unittest import mock

import numpy as np

from . import passivation
from ._roots import ConvergenceError
from .disgrad import QuadratureError
from .pch import SingularStructureError, pch_residual, theorem3_structure
from .sdmodel import IntegrationError
from .sim import (
    ExperimentConfig, pendulum_closed_loop, pendulum_design, simulate_continuous,
    simulate_sampled, storage_rmse, write_trace_csv,
)
from .verify import SUITES, run_suites

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
SOLVER_ERRORS = (
    ConvergenceError, IntegrationError, QuadratureError,
    passivation.SingularTermError, SingularStructureError,
)
DEFAULTS = {
    "kappa": 0.0, "r": 0.4, "qstar": math.pi / 2, "x0": "0,0", "order": "1",
    "T": 20.0, "out": ".", "grid": "0.05:0.05:1.5", "orders": "0,1",
}
FAULTS = ("gamma1-sign",)


class UsageError(Exception):
    pass


# --- parsing helpers -------------------------------------------------------------

def parse_order(s):
    s = str(s).strip()
    if s == "exact":
        return "exact"
    if s in ("0", "1", "2"):
        return int(s)
    raise UsageError(f"order must be 0, 1, 2 or exact, got {s!r}")


def parse_point(s):
    try:
        vals = tuple(float(t) for t in str(s).split(","))
    except ValueError:
        raise UsageError(f"bad state {s!r}; expected q,p") from None
    if len(vals) != 2:
        raise UsageError(f"bad state {s!r}; expected q,p")
    return vals


def parse_grid(s):
    """``start:step:stop`` inclusive of ``stop`` (up to rounding)."""
    try:
        start, step, stop = (float(t) for t in str(s).split(":"))
    except ValueError:
        raise UsageError(f"bad grid {s!r}; expected start:step:stop") from None
    if not (start > 0 and step > 0 and stop >= start):
        raise UsageError("grid needs start > 0, step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def read_config(path):
    """Plain ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected key=value")
        key, val = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def resolve(args, keys):
    """Flags > config file > defaults."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(cfg) - set(DEFAULTS) - {"delta", "jobs"}
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    out = {}
    for k in keys:
        val = getattr(args, k, None)
        if val is None:
            val = cfg.get(k, DEFAULTS.get(k))
        out[k] = val
    return out


def _float(name, val):
    try:
        return float(val)
    except (TypeError, ValueError):
        raise UsageError(f"--{name} needs a number, got {val!r}") from None


def experiment(opts, delta, order):
    try:
        return ExperimentConfig(
            delta=delta, T=_float("T", opts["T"]), order=order,
            kappa=_float("kappa", opts["kappa"]), r=_float("r", opts["r"]),
            qstar=_float("qstar", opts["qstar"]), x0=parse_point(opts["x0"]),
        )
    except ValueError as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(str(exc)) from None


def default_jobs():
    try:
        return max(1, int(os.environ.get("SDPASS_JOBS", "1")))
    except ValueError:
        return 1


# --- commands ----------------------------------------------------------------------

def cmd_simulate(args):
    opts = resolve(args, ["delta", "kappa", "r", "qstar", "x0", "order", "T", "out"])
    if opts["delta"] is None:
        raise UsageError("--delta is required")
    if opts["r"] is not None and _float("r", opts["r"]) <= 0:
        raise UsageError("r must be positive")
    cfg = experiment(opts, _float("delta", opts["delta"]), parse_order(opts["order"]))
    _, _, design = pendulum_design(cfg.r, cfg.qstar)
    ctrl = passivation.SampledController(design, cfg.delta, cfg.order, cfg.kappa)
    sampled = simulate_sampled(cfg, ctrl)
    reference = simulate_continuous(cfg, design)
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    tag = f"p{cfg.order}_d{cfg.delta:g}"
    write_trace_csv(sampled, out / f"sampled_{tag}.csv")
    write_trace_csv(reference, out / f"continuous_{tag}.csv")
    xstar = np.array([cfg.qstar, 0.0])
    dist = float(np.linalg.norm(sampled.states[-1] - xstar))
    print(
        f"order={cfg.order} delta={cfg.delta:g} kappa={cfg.kappa:g} "
        f"final_dist={dist:.6g} final_Hd={sampled.storage[-1]:.6g} "
        f"reference_final_Hd={reference.storage[-1]:.6g} out={out}"
    )
    return EXIT_OK


def _sweep_row(cfg):
    _, _, design = pendulum_design(cfg.r, cfg.qstar)
    ref_cfg = ExperimentConfig(cfg.delta, cfg.T, 0, 0.0, cfg.r, cfg.qstar, cfg.x0)
    ref = simulate_continuous(ref_cfg, design)
    ctrl = passivation.SampledController(design, cfg.delta, cfg.order, cfg.kappa)
    tr = simulate_sampled(cfg, ctrl, record_residual=False)
    return cfg.delta, cfg.order, storage_rmse(tr, ref)


def cmd_sweep(args):
    opts = resolve(args, ["kappa", "r", "qstar", "x0", "T", "out", "grid", "orders"])
    deltas = parse_grid(opts["grid"])
    orders = [parse_order(o) for o in str(opts["orders"]).split(",")]
    jobs = args.jobs if args.jobs is not None else default_jobs()
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    configs = [experiment(opts, d, p) for d in deltas for p in orders]
    if jobs == 1:
        rows = [_sweep_row(c) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, configs))
    lines = ["delta,p,rmse"] + [f"{d:.17g},{p},{e:.17g}" for d, p, e in rows]
    text = "\n".join(lines) + "\n"
    if args.out is None and "out" not in (read_config(args.config) if args.config else {}):
        sys.stdout.write(text)
    else:
        path = Path(opts["out"])
        if path.suffix != ".csv":
            path.mkdir(parents=True, exist_ok=True)
            path = path / "sweep.csv"
        path.write_text(text)
        print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def _flipped_gamma1(original):
    def term(design, i, x, limit=False):
        val = original(design, i, x, limit=limit)
        return -val if i == 1 else val
    return term


def cmd_verify(args):
    names = args.only.split(",") if args.only else None
    if names and any(n not in SUITES for n in names):
        raise UsageError(f"--only takes a subset of {','.join(SUITES)}")
    with ExitStack() as stack:
        if args.inject_fault == "gamma1-sign":
            stack.enter_context(mock.patch.object(
                passivation, "gamma_series_term",
                _flipped_gamma1(passivation.gamma_series_term),
            ))
        results = run_suites(names)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return EXIT_VERIFY
    print("all properties pass")
    return EXIT_OK


def cmd_pch_check(args):
    opts = resolve(args, ["r", "qstar"])
    x = np.array(parse_point(args.x))
    delta = _float("delta", args.delta)
    if delta <= 0:
        raise UsageError("delta must be positive")
    loop = pendulum_closed_loop(_float("r", opts["r"]), _float("qstar", opts["qstar"]))
    st = theorem3_structure(loop, delta, x)
    eig = np.linalg.eigvalsh(st.R)
    with np.printoptions(precision=10):
        print(f"J_delta =\n{st.J}\nR_delta =\n{st.R}")
    print(f"skew_err={np.max(np.abs(st.J + st.J.T)):.3e} "
          f"min_eig_R={eig.min():.6g} residual={pch_residual(loop, delta, x):.6g}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="sdpass", description="Sampled-data feedback passivation of the pendulum.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file; flags override it")
        p.add_argument("--kappa", type=float, help="damping gain (default 0)")
        p.add_argument("--r", type=float, help="friction coefficient (default 0.4)")
        p.add_argument("--qstar", type=float, help="target angle (default pi/2)")
        p.add_argument("--x0", help="initial state q,p (default 0,0)")
        p.add_argument("--T", type=float, help="horizon in seconds (default 20)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="run one sampled-data simulation")
    p.add_argument("--delta", type=float, help="sampling period (required)")
    p.add_argument("--order", help="0, 1, 2 or exact (default 1)")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="storage RMSE over a grid of sampling periods")
    p.add_argument("--grid", help="start:step:stop (default 0.05:0.05:1.5)")
    p.add_argument("--orders", help="comma-separated orders (default 0,1)")
    p.add_argument("--jobs", type=int, help="worker processes (default $SDPASS_JOBS or 1)")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--only", help=f"comma-separated subset of {','.join(SUITES)}")
    p.add_argument("--inject-fault", choices=FAULTS, help="mutation check hook")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("pch-check", help="sampled port-Hamiltonian structure at a state")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--x", default="0.5,0.2", help="state q,p")
    p.add_argument("--config")
    p.add_argument("--r", type=float)
    p.add_argument("--qstar", type=float)
    p.set_defaults(func=cmd_pch_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sdpass {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SOLVER_ERRORS as exc:
        print(f"sdpass {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
