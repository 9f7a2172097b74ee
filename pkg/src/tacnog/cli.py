"""``tacnog`` command line.

Exit status: 0 success, 1 domain failure (bad input file, failed audit,
aborted run), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import kernels
from .dataset import (
    DatasetFormatError,
    SweepConfig,
    as_arrays,
    generate_dataset,
    prune_dominated,
    read_dataset,
    replay,
    write_dataset,
)
from .extremal import DEFAULT_STEP, CostateParams
from .frames import G0, InvalidScenario, canonicalize, load_scenario
from .policy import (
    PolicyNetwork,
    TrainConfig,
    TrainConfigError,
    WeightsFormatError,
    feedback_control,
    load_weights,
    save_weights,
    train,
)
from .scaling import DEFAULT_LAMBDAS, scaling_suite
from .shooting import ShootingProblem, multistart, solve, write_roots
from .sim import ShootingOracle, network_policy, run_closed_loop

DOMAIN_ERRORS = (
    InvalidScenario,
    DatasetFormatError,
    WeightsFormatError,
    TrainConfigError,
    OSError,
    ValueError,
    RuntimeError,
)


class DomainFailure(Exception):
    """A command ran but its result is a failure (audit tripped, run aborted)."""


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _default_seed() -> int:
    raw = os.environ.get("TACNOG_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"tacnog: TACNOG_SEED must be an integer, got {raw!r}") from None


# --- subcommands -----------------------------------------------------------


def cmd_gen_dataset(a) -> None:
    cfg = SweepConfig(a.pmax, a.step, a.horizon, a.h, None)
    progress = None
    if a.progress:
        progress = lambda s: print(f"  {s.total}/{cfg.grid_size} accepted={s.accepted}", file=sys.stderr)
    records, stats = generate_dataset(cfg, workers=a.workers, progress=progress)
    out = {"grid_size": cfg.grid_size, **stats.as_dict()}
    if a.prune_dominated:
        kept = prune_dominated(records, cfg.T, cfg.h)
        out["pruned_dominated"] = len(records) - len(kept)
        records = kept
    write_dataset(records, a.out)
    out["written"] = len(records)
    _emit({"stats": out})


def cmd_train(a) -> None:
    records = read_dataset(a.data)
    if a.prune_dominated:
        records = prune_dominated(records, a.horizon, a.h)
    Z, U, Q = as_arrays(records)
    cfg = TrainConfig(
        epochs=a.epochs,
        batch_size=a.batch_size,
        lr=a.lr,
        momentum=a.momentum,
        lr_decay=a.lr_decay,
        decay_every=a.decay_every,
        val_fraction=a.val_fraction,
        seed=a.seed,
        optimizer=a.optimizer,
    )
    log = None
    if a.verbose:
        log = lambda ep, tr, va: print(f"  epoch {ep} train={tr:.6g} val={va:.6g}", file=sys.stderr)
    net, hist = train(Z, U, Q, cfg, T=a.horizon, log=log)
    save_weights(net, a.out)
    _emit(
        {
            "records": len(records),
            "val_rmse": hist.val_rmse,
            "val_control_std": hist.val_control_std,
            "rmse_over_std": hist.val_rmse / hist.val_control_std,
            "best_epoch": hist.best_epoch,
            "weights": a.out,
        }
    )


def cmd_shoot(a) -> None:
    cs = canonicalize(load_scenario(a.scenario))
    h = a.h if a.h is not None else min(DEFAULT_STEP, cs.t_f / 3000)
    if a.multistart:
        roots = multistart(
            cs.pursuer0, cs.t_f, p_q=a.pq, spacing=a.spacing, ref_horizon=a.ref_horizon, h=h
        )
    else:
        q0 = CostateParams(*a.q0)
        roots = [solve(ShootingProblem(cs.pursuer0, cs.t_f, q0, h=h))]
        if not roots[0].converged:
            raise DomainFailure(f"shooting did not converge (|r| = {roots[0].residual_norm:.3g})")
    if a.out:
        write_roots(roots, a.out)
    _emit([r.to_dict() for r in roots])


def cmd_simulate(a) -> None:
    sc = load_scenario(a.scenario)
    a_max = sc.a_max if math.isfinite(sc.a_max) else a.amax_g * G0
    if a.oracle:
        policy = ShootingOracle.for_scenario(sc)
    else:
        policy = network_policy(load_weights(a.model))
    res = run_closed_loop(sc, policy, dt=a.dt, h=a.plant_h, a_max=a_max)
    if a.out:
        res.write(a.out)
    _emit(res.summary())
    if res.aborted:
        raise DomainFailure(res.reason)


def cmd_eval_scaling(a) -> None:
    rep = scaling_suite(a.n, a.lambdas, a.pmax, a.horizon, a.h, a.seed)
    _emit({**rep.as_dict(), "tolerance": a.tol, "pass": rep.max_error < a.tol})
    if not rep.max_error < a.tol:
        raise DomainFailure(f"scaling covariance error {rep.max_error:.3g} exceeds {a.tol:g}")


def cmd_replay(a) -> None:
    records = read_dataset(a.data)
    if a.limit is not None:
        records = records[: a.limit]
    rep = replay(records, a.horizon, a.h, refine=a.refine, check_colinear=a.colinear)
    ok = rep.ok and rep.max_state_error <= a.tol and rep.max_control_error <= a.tol
    _emit(
        {
            "checked": rep.checked,
            "max_state_error": rep.max_state_error,
            "max_control_error": rep.max_control_error,
            "refined_disconjugacy_failures": len(rep.refined_disconjugacy_failures),
            "refined_colinear_failures": len(rep.refined_colinear_failures),
            "pass": ok,
        }
    )
    if not ok:
        raise DomainFailure("replay audit failed")


def cmd_bench_infer(a) -> None:
    net = load_weights(a.model) if a.model else PolicyNetwork.init(a.horizon, seed=a.seed)
    rng = np.random.default_rng(a.seed)
    zs = np.column_stack(
        [rng.uniform(-1, 1, a.n), rng.uniform(0, 1.5, a.n), rng.uniform(-math.pi, math.pi, a.n)]
    )
    t0 = time.perf_counter()
    for z in zs:
        feedback_control(net, 1.0, z)
    per_call = (time.perf_counter() - t0) / a.n
    # timings vary run to run; they go to stderr so stdout stays reproducible
    print(f"mean latency {per_call * 1e6:.2f} us per call", file=sys.stderr)
    _emit({"calls": a.n, "limit_s": a.limit, "pass": per_call <= a.limit})
    if per_call > a.limit:
        raise DomainFailure(f"inference {per_call:.3g} s per call exceeds {a.limit:g} s")


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tacnog", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default $TACNOG_SEED or 0)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="sweep the q-grid into a training CSV")
    g.add_argument("--pmax", type=float, required=True)
    g.add_argument("--step", type=float, required=True)
    g.add_argument("--horizon", type=float, default=1.5)
    g.add_argument("--h", type=float, default=DEFAULT_STEP)
    g.add_argument("--out", required=True)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--prune-dominated", action="store_true",
                   help="drop records a nearby cheaper extremal proves suboptimal")
    g.add_argument("--progress", action="store_true")
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", help="fit the 3-20-20-1 policy network")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--horizon", type=float, default=1.5)
    t.add_argument("--h", type=float, default=DEFAULT_STEP)
    t.add_argument("--epochs", type=int, default=300)
    t.add_argument("--batch-size", type=int, default=256)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--lr-decay", type=float, default=0.5)
    t.add_argument("--decay-every", type=int, default=100)
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.add_argument("--optimizer", choices=["momentum", "adam"], default="momentum")
    t.add_argument("--prune-dominated", action="store_true")
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("shoot", help="solve the two-point problem for a scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--multistart", action="store_true")
    s.add_argument("--q0", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    s.add_argument("--pq", type=float, default=8.0)
    s.add_argument("--spacing", type=float, default=2.0)
    s.add_argument("--ref-horizon", type=float, default=None)
    s.add_argument("--h", type=float, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_shoot)

    m = sub.add_parser("simulate", help="closed-loop run of a scenario")
    m.add_argument("--scenario", required=True)
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--oracle", action="store_true", help="re-solve shooting every guidance step")
    m.add_argument("--dt", type=float, default=None)
    m.add_argument("--plant-h", type=float, default=None)
    m.add_argument("--amax-g", type=float, default=5.0,
                   help="saturation when the scenario gives none")
    m.add_argument("--out")
    m.set_defaults(func=cmd_simulate)

    e = sub.add_parser("eval-scaling", help="time-scaling covariance audit")
    e.add_argument("--n", type=int, default=100)
    e.add_argument("--lambdas", type=float, nargs="+", default=list(DEFAULT_LAMBDAS))
    e.add_argument("--pmax", type=float, default=10.0)
    e.add_argument("--horizon", type=float, default=1.5)
    e.add_argument("--h", type=float, default=DEFAULT_STEP)
    e.add_argument("--tol", type=float, default=1e-8)
    e.set_defaults(func=cmd_eval_scaling)

    r = sub.add_parser("replay", help="re-propagate dataset records and refine the filters")
    r.add_argument("--data", required=True)
    r.add_argument("--horizon", type=float, default=1.5)
    r.add_argument("--h", type=float, default=DEFAULT_STEP)
    r.add_argument("--refine", type=int, default=10)
    r.add_argument("--colinear", action="store_true")
    r.add_argument("--limit", type=int, default=None)
    r.add_argument("--tol", type=float, default=1e-10)
    r.set_defaults(func=cmd_replay)

    b = sub.add_parser("bench-infer", help="feedback-law latency smoke test")
    b.add_argument("--model")
    b.add_argument("--horizon", type=float, default=1.5)
    b.add_argument("--n", type=int, default=10000)
    b.add_argument("--limit", type=float, default=1e-3, help="seconds per call")
    b.set_defaults(func=cmd_bench_infer)
    return p


_DEFAULT_LR = {"momentum": 0.05, "adam": 0.003}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if a.seed is None:
        a.seed = _default_seed()
    if getattr(a, "lr", "absent") is None:
        a.lr = _DEFAULT_LR[a.optimizer]
    if getattr(a, "workers", 1) < 1:
        parser.print_usage(sys.stderr)
        print("tacnog: error: --workers must be at least 1", file=sys.stderr)
        return 2
    resolved = {k: v for k, v in vars(a).items() if k != "func"}
    resolved["backend"] = kernels.BACKEND
    print("config: " + json.dumps(resolved, sort_keys=True))
    try:
        a.func(a)
    except DomainFailure as e:
        print(f"tacnog: {e}", file=sys.stderr)
        return 1
    except DOMAIN_ERRORS as e:
        print(f"tacnog: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
