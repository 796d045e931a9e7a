"""Command-line entry point: ``beamopt run | trace | validate``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .harness import (PlanError, load_plan, run_plan, run_single_trace, write_outputs, fmt)
from .model import LOG2E

EXIT_OK, EXIT_CONFIG, EXIT_ALGO = 0, 1, 2


def _cmd_run(args) -> int:
    plan = load_plan(args.plan)
    records = run_plan(plan, workers=args.workers)
    out = write_outputs(plan, records, args.out)
    failed = [r.row for r in records if r.row.status != "ok"]
    print(f"wrote {len(records)} rows to {out}")
    for r in failed:
        print(f"FAILED {r.algo} sweep={fmt(r.sweep_value)} drop={r.drop}: {r.status}",
              file=sys.stderr)
    return EXIT_ALGO if failed else EXIT_OK


def _cmd_trace(args) -> int:
    plan = load_plan(args.plan)
    res = run_single_trace(plan, args.algo, args.sweep_index, args.drop)
    print("iter,objective_nats,mr_bps,sr_bps,wall_ms")
    for e in res.trace.entries:
        print(",".join(fmt(x) for x in (e.iteration, e.objective, e.mr, e.sr, e.wall_ms)))
    return EXIT_OK


def validation_checks(seed: int = 0):
    """Invariant checks on small synthetic instances: yields ``(name, passed)``."""
    from . import effective as eff
    from .model import ChannelSet, FDBeamformer, IGSBeamformer, OuterProductBeamformer
    from .rates import power_pgs, power_pgs_gram, rate_fd, rate_igs, rate_pgs
    from .solvers import QuadUpdateProblem, closed_form_update
    from .surrogate import igs_rate_surrogate, scalar_rate_surrogate

    rng = np.random.default_rng(seed)

    def cn(*s):
        return rng.standard_normal(s) + 1j * rng.standard_normal(s)

    K, Q, M = 3, 2, 3
    ch = ChannelSet(cn(K, M, M), np.zeros(K), 0.5)
    bf = OuterProductBeamformer(cn(K, Q, M), cn(K, Q, M))
    ig = IGSBeamformer(cn(K, Q, M), cn(K, Q, M), cn(K, Q, M), cn(K, Q, M))
    r = rate_pgs(ch, bf)
    yield "fd rate of assembled matrices equals rank-Q rate", \
        np.allclose(rate_fd(ch, FDBeamformer(bf.matrices())), r, atol=1e-10)
    yield "IGS rate with zero conjugate beams equals proper rate", \
        np.allclose(rate_igs(ch, IGSBeamformer.from_proper(bf)), r, atol=1e-10)
    yield "IGS azimuth and elevation forms agree", \
        np.allclose(rate_igs(ch, ig, "azimuth"), rate_igs(ch, ig, "elevation"), atol=1e-10)
    yield "Gram power equals direct power", \
        abs(power_pgs(bf) - power_pgs_gram(bf, "elevation")) <= 1e-10 * power_pgs(bf)
    ok = True
    for axis in ("azimuth", "elevation"):
        rows = eff.build_rows_pgs(ch, bf, axis)
        x = bf.stacked(axis)
        ok &= np.allclose(scalar_rate_surrogate(rows, x, ch.sigma).value(x), r, atol=1e-9)
        quad = eff.build_rows_igs(ch, ig, axis)
        v = ig.composite(axis)
        ok &= np.allclose(igs_rate_surrogate(quad, v, ch.sigma).value(v) / 2,
                          rate_igs(ch, ig), atol=1e-8)
    yield "minorants touch at the expansion point", bool(ok)
    rows = eff.build_rows_pgs(ch, bf, "azimuth")
    sur = scalar_rate_surrogate(rows, bf.stacked("azimuth"), ch.sigma)
    gamma = np.ones(K)
    gram = eff.build_gram_pgs(bf, "azimuth")
    prob = QuadUpdateProblem(sur.penalty(gamma), sur.b, gamma, gram, 0.1)
    res = closed_form_update(prob)
    resid = np.einsum("kde,ke->kd", prob.C + res.lam * prob.Q, res.x) - prob.rhs()
    yield "closed-form update meets the budget", abs(res.power - 0.1) <= 1e-6 * 0.1
    yield "closed-form update is stationary", \
        float(np.max(np.abs(resid))) <= 1e-8 * float(np.max(np.abs(prob.rhs())))
    yield "nats to bps factor", abs(LOG2E - 1.4426950408889634) < 1e-15


def _cmd_validate(args) -> int:
    failures = 0
    for name, passed in validation_checks(args.seed):
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
        failures += not passed
    return EXIT_OK if failures == 0 else EXIT_ALGO


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beamopt", description=(
        "Rank-Q, full-dimensional and improper-signalling downlink beamforming experiments."))
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and diagnostics")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment plan and write CSV outputs")
    r.add_argument("--plan", required=True)
    r.add_argument("--out", help="override the plan's out_dir")
    r.add_argument("--workers", type=int, help="worker processes (default: BEAMOPT_THREADS or CPUs)")
    r.set_defaults(func=_cmd_run)
    t = sub.add_parser("trace", help="print the convergence trace of one design")
    t.add_argument("--plan", required=True)
    t.add_argument("--algo", required=True)
    t.add_argument("--sweep-index", type=int, default=0)
    t.add_argument("--drop", type=int, default=0)
    t.set_defaults(func=_cmd_trace)
    v = sub.add_parser("validate", help="run invariant checks on synthetic instances")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PlanError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
