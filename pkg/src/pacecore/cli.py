"""Command line front end.

Exit codes: 0 success or Certified, 1 Refuted, 2 configuration error,
3 runtime failure, 4 solver non-convergence, 5 Inconclusive.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import coreaudit, equilibrium, instances, mechanisms, reduction, strategies
from .model import ConfigError, load_instance, rng_stream, save_instance

EXIT_OK, EXIT_REFUTED, EXIT_CONFIG, EXIT_RUNTIME, EXIT_NONCONVERGED, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4, 5
STATUS_EXIT = {"Certified": EXIT_OK, "Refuted": EXIT_REFUTED, "Inconclusive": EXIT_INCONCLUSIVE}


def _seed(args, fallback: int) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("PACECORE_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"PACECORE_SEED must be an integer, got {env!r}") from None
    return int(fallback)


def _instance(args):
    inst = load_instance(Path(args.instance).resolve())
    inst = inst.with_seed(_seed(args, inst.seed))
    if getattr(args, "t", None):
        inst = inst.with_horizon(args.t)
    return inst


def _beta(args, inst):
    if args.beta is None:
        raise ConfigError("--beta is required (a solver JSON file or comma-separated values)")
    p = Path(args.beta)
    if p.suffix == ".json" or p.exists():
        beta = equilibrium.load_profile(p.resolve()).beta
    else:
        try:
            beta = np.array([float(x) for x in args.beta.split(",")])
        except ValueError:
            raise ConfigError(f"cannot read beta from {args.beta!r}") from None
    if beta.shape != (inst.n,):
        raise ConfigError(f"beta has {beta.size} entries, instance has {inst.n} agents")
    return beta


def _write(path, payload) -> None:
    if path is None:
        print(json.dumps(payload, indent=2))
        return
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def cmd_simulate(args) -> int:
    inst = _instance(args)
    if args.beta is not None:
        strats = strategies.pacing_profile(_beta(args, inst))
    elif inst.strategies:
        strats = strategies.strategies_from_specs(inst.strategies, inst.n)
    else:
        strats = [strategies.Truthful() for _ in range(inst.n)]
    res = reduction.simulate(inst, args.mech, strats)
    if not reduction.feasibility_audit(res, inst):
        print("feasibility audit failed", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reduction.write_trace(res, out / "trace.jsonl")
    (out / "summary.csv").write_text(reduction.summary_csv(res), encoding="utf-8")
    print(f"wrote {out / 'trace.jsonl'} and {out / 'summary.csv'}; total cost {res.total_cost:.6f} "
          f"<= {inst.alpha * inst.T:.6f}")
    return EXIT_OK


def cmd_solve_beta(args) -> int:
    inst = _instance(args)
    sched = tuple(int(x) for x in args.schedule.split(","))
    try:
        prof = equilibrium.solve_pacing(inst, args.mech, tol=args.tol, max_iters=args.max_iters,
                                        schedule=sched, seed=inst.seed)
    except equilibrium.NonConvergence as exc:
        _write(args.out, exc.profile.to_dict())
        print(str(exc), file=sys.stderr)
        return EXIT_NONCONVERGED
    _write(args.out, prof.to_dict())
    return EXIT_OK


def cmd_verify_focal(args) -> int:
    inst = _instance(args)
    rep = equilibrium.verify_focal(inst, args.mech, _beta(args, inst), runs=args.runs, T=inst.T, seed=inst.seed)
    _write(args.out, rep.to_dict())
    return EXIT_OK


def cmd_audit_ex_ante(args) -> int:
    inst = _instance(args)
    cert = coreaudit.certify_ex_ante(inst, args.mech, _beta(args, inst), gamma=args.gamma,
                                     samples=args.samples, seed=inst.seed)
    _write(args.out, cert.to_dict())
    return STATUS_EXIT[cert.status]


def cmd_audit_ex_post(args) -> int:
    inst = _instance(args)
    res = reduction.read_trace(Path(args.trace).resolve())
    beta = _beta(args, inst) if args.beta is not None else None
    grid = [float(g) for g in args.gamma_grid.split(",")] if args.gamma_grid else None
    cert = coreaudit.audit_ex_post(res, inst, gamma=args.gamma, delta=args.delta, beta=beta,
                                   gamma_grid=grid, seed=inst.seed)
    _write(args.out, cert.to_dict())
    return STATUS_EXIT[cert.status]


def cmd_dwl_scan(args) -> int:
    seed = _seed(args, 0)
    res = mechanisms.dwl_sup_scan(args.mech, args.n, samples=args.samples, rng=rng_stream(seed, "scan"))
    _write(args.out, res.to_dict())
    return EXIT_OK


def cmd_regularity(args) -> int:
    seed = _seed(args, 0)
    axioms = mechanisms.AXIOMS if args.axiom == "all" else tuple(a.strip() for a in args.axiom.split(","))
    reports = [mechanisms.regularity_probe(args.mech, a, trials=args.trials, rng=rng_stream(seed, "probe", a),
                                           m=args.m).to_dict() for a in axioms]
    _write(args.out, reports)
    return EXIT_OK


def cmd_lb_instance(args) -> int:
    spec = instances.LowerBoundSpec(args.n, args.eps, args.alpha_prime, args.variant, args.t or 10_000,
                                    _seed(args, 0))
    inst = instances.make_lower_bound(spec)
    if args.out is None:
        from .model import instance_to_dict

        print(json.dumps(instance_to_dict(inst), indent=2))
    else:
        save_instance(inst, args.out)
    return EXIT_OK


def _alt_strategy(text: str, beta_i: float) -> strategies.Strategy:
    if text == "truthful":
        return strategies.Truthful()
    if text == "half":
        return strategies.ValueScaling(beta_i / 2)
    if text == "double":
        return strategies.ValueScaling(beta_i * 2)
    if text.startswith("beta="):
        return strategies.ValueScaling(float(text[5:]))
    raise ConfigError(f"unknown deviation {text!r}; use truthful, half, double or beta=<x>")


def cmd_deviation_test(args) -> int:
    inst = _instance(args)
    beta = _beta(args, inst)
    if not 0 <= args.agent < inst.n:
        raise ConfigError(f"no agent {args.agent}")
    out = []
    for T in [int(x) for x in args.horizons.split(",")]:
        for alt in args.alt.split(","):
            g = strategies.deviation_gain(inst, args.mech, beta, args.agent, _alt_strategy(alt, beta[args.agent]),
                                          replications=args.runs, T=T, seed=inst.seed)
            out.append({"alt": alt, **g.to_dict()})
    _write(args.out, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pacecore", description="pacing equilibria and core audits")
    ap.add_argument("--seed", type=int, default=None, help="overrides the instance seed and PACECORE_SEED")
    ap.add_argument("--workers", type=int, default=1, help="worker count (runs are single-process)")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, fn, inst=True, mech=True):
        p = sub.add_parser(name)
        p.set_defaults(fn=fn)
        if inst:
            p.add_argument("--instance", required=True)
            p.add_argument("--t", type=int, default=None, help="override the horizon")
        if mech:
            p.add_argument("--mech", required=True, choices=sorted(mechanisms.MECHANISMS))
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        return p

    p = command("simulate", cmd_simulate)
    p.add_argument("--beta", default=None)
    p.set_defaults(out="run")

    p = command("solve-beta", cmd_solve_beta)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--schedule", default="10000,100000")

    p = command("verify-focal", cmd_verify_focal)
    p.add_argument("--beta", default=None)
    p.add_argument("--runs", type=int, default=200)

    p = command("audit-ex-ante", cmd_audit_ex_ante)
    p.add_argument("--beta", default=None)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--samples", type=int, default=100_000)

    p = command("audit-ex-post", cmd_audit_ex_post, mech=False)
    p.add_argument("--trace", required=True)
    p.add_argument("--beta", default=None)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--gamma-grid", default=None)

    p = command("dwl-scan", cmd_dwl_scan, inst=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--samples", type=int, default=100_000)

    p = command("regularity", cmd_regularity, inst=False)
    p.add_argument("--axiom", default="all")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--m", type=int, default=1)

    p = command("lb-instance", cmd_lb_instance, inst=False, mech=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--alpha-prime", type=float, default=0.5)
    p.add_argument("--variant", choices=instances.VARIANTS, default="main")
    p.add_argument("--t", type=int, default=None)

    p = command("deviation-test", cmd_deviation_test)
    p.add_argument("--beta", default=None)
    p.add_argument("--agent", type=int, default=0)
    p.add_argument("--alt", default="half,double,truthful")
    p.add_argument("--horizons", default="10000,40000")
    p.add_argument("--runs", type=int, default=200)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as the runtime exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
