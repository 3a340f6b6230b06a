"""Command-line interface.

Commands: ``validate`` a model file, ``solve`` it with a configured
algorithm and write a convergence trace, ``reproduce`` a named scripted
scenario, ``compare`` algorithms side by side, and ``bench`` seeded
random workloads.  Exit codes: 0 success, 1 check or convergence
failure, 2 usage or parse errors.

The environment variable TOTALDP_TOL overrides the default residual
tolerance for ``solve`` and ``compare``.
"""

from __future__ import annotations

import json
import os
import sys
import time

import click
import numpy as np

from .extreal import INF, sup_dist
from .model import Policy, validate_model
from .operators import h_backup
from .solvers import (
    EmptyB,
    FullB,
    OccupationSupportB,
    SolverCapError,
    SolverConfig,
    lp_variant_vpi,
    mixed_vpi,
    modified_policy_iteration,
    policy_iteration,
    round_robin_masks,
    value_iteration,
    verify_certificates,
)
from .fixtures import fixture, fixture_names, random_model
from .scenarios import SCENARIOS, run_scenario
from .modelio import (
    ModelFileError,
    model_hash,
    read_model,
    write_model,
    write_trace,
)

ALGORITHMS = ("vi", "pi", "mpi", "mixed", "lp")


def _default_tol() -> float:
    env = os.environ.get("TOTALDP_TOL")
    return float(env) if env else 1e-9


@click.group()
def main():
    """Total-cost dynamic programming solvers."""


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--lenient", is_flag=True, help="Warn on unknown fields instead of failing.")
def validate(path, lenient):
    """Parse and validate a model file."""
    try:
        model, gt = read_model(path, strict=not lenient)
    except ModelFileError as e:
        click.echo(f"parse error: {e}", err=True)
        sys.exit(2)
    problems = validate_model(model)
    if problems:
        for p in problems:
            click.echo(f"violation: {p}")
        sys.exit(1)
    click.echo(f"OK: {model.num_states} states, {model.num_pairs()} atomic pairs, "
               f"regime {model.regime}, hash {model_hash(model)}")
    if gt is not None:
        click.echo("ground truth block present")


def _parse_vector(spec: str, model, gt) -> np.ndarray:
    n = model.num_states
    if spec == "zero":
        return np.zeros(n)
    if spec == "inf":
        sign = -1.0 if model.regime == "N" else 1.0
        return np.full(n, sign * INF)
    if spec.startswith("cJstar:"):
        if gt is None:
            raise click.UsageError("cJstar start needs a ground_truth block in the model file")
        c = float(spec.split(":", 1)[1])
        return c * gt[0]
    if spec.startswith("file:"):
        with open(spec.split(":", 1)[1]) as fh:
            vals = json.load(fh)
        return np.array([INF if v == "inf" else (-INF if v == "-inf" else float(v))
                         for v in vals])
    raise click.UsageError(f"bad vector spec {spec!r} "
                           "(use zero | inf | cJstar:<c> | file:<path>)")


def _parse_q0(spec: str, model, gt, J0: np.ndarray) -> np.ndarray:
    if spec == "hbackup":
        return h_backup(model, J0)
    if spec == "zero":
        return np.zeros(model.num_pairs())
    if spec == "inf":
        sign = -1.0 if model.regime == "N" else 1.0
        return np.full(model.num_pairs(), sign * INF)
    if spec.startswith("file:"):
        with open(spec.split(":", 1)[1]) as fh:
            vals = json.load(fh)
        return np.array([INF if v == "inf" else (-INF if v == "-inf" else float(v))
                         for v in vals])
    raise click.UsageError(f"bad Q spec {spec!r} (use hbackup | zero | inf | file:<path>)")


def _parse_bstrategy(spec: str):
    if spec == "full":
        return FullB()
    if spec == "empty":
        return EmptyB()
    if spec.startswith("occupation"):
        parts = spec.split(":")
        beta = float(parts[1]) if len(parts) > 1 else 0.5
        threshold = float(parts[2]) if len(parts) > 2 else 1e-12
        return OccupationSupportB(beta=beta, threshold=threshold)
    raise click.UsageError(f"bad B strategy {spec!r} "
                           "(use full | empty | occupation[:beta[:threshold]])")


def _parse_mu0(spec: str, model) -> Policy:
    if spec == "greedy":
        return Policy.deterministic(
            model, [int(np.argmin([c.cost for c in model.controls[x]]))
                    for x in range(model.num_states)])
    try:
        choices = [int(v) for v in spec.split(",")]
    except ValueError:
        raise click.UsageError(f"bad policy spec {spec!r} "
                               "(use greedy | comma-separated control indices)")
    if len(choices) != model.num_states:
        raise click.UsageError(f"policy spec needs {model.num_states} indices")
    return Policy.deterministic(model, choices)


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--algorithm", type=click.Choice(ALGORITHMS), default="mixed")
@click.option("--j0", default="zero", help="zero | inf | cJstar:<c> | file:<path>")
@click.option("--q0", default="hbackup", help="hbackup | zero | inf | file:<path>")
@click.option("--nk", default="10", help="operator powers per iteration, or 'exact'")
@click.option("--epsilon", type=float, default=0.0)
@click.option("--bstrategy", default="full",
              help="full | empty | occupation[:beta[:threshold]]")
@click.option("--mu0", default="greedy", help="initial policy for pi/mpi")
@click.option("--tol", type=float, default=None)
@click.option("--max-iter", type=int, default=10_000)
@click.option("--clamp-lo", type=float, default=None)
@click.option("--clamp-hi", type=float, default=None)
@click.option("--mask-schedule", type=click.Choice(["none", "roundrobin"]),
              default="none")
@click.option("--trace-out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
def solve(path, algorithm, j0, q0, nk, epsilon, bstrategy, mu0, tol, max_iter,
          clamp_lo, clamp_hi, mask_schedule, trace_out, fmt):
    """Solve a model file and emit a convergence trace."""
    try:
        model, gt = read_model(path)
    except ModelFileError as e:
        click.echo(f"parse error: {e}", err=True)
        sys.exit(2)
    problems = validate_model(model)
    if problems:
        for p in problems:
            click.echo(f"invalid model: {p}", err=True)
        sys.exit(2)
    if algorithm == "lp" and model.regime != "P":
        raise click.UsageError("the lp variant needs a nonnegative-cost (P) model")
    if algorithm in ("pi", "mpi", "mixed", "lp") and not model.atomic_only:
        raise click.UsageError(f"{algorithm} needs an atomic-only model; "
                               "vi also handles affine families")
    tol = tol if tol is not None else _default_tol()
    nk_val: object = nk if nk == "exact" else int(nk)
    J0 = _parse_vector(j0, model, gt)
    n = model.num_states
    config = SolverConfig(
        algorithm=algorithm,
        J0=J0,
        Q0=_parse_q0(q0, model, gt, J0) if algorithm in ("mixed", "lp") else None,
        nk=nk_val,
        epsilon=epsilon,
        bstrategy=_parse_bstrategy(bstrategy),
        clamp_lo=None if clamp_lo is None else np.full(n, clamp_lo),
        clamp_hi=None if clamp_hi is None else np.full(n, clamp_hi),
        masks=round_robin_masks(model) if mask_schedule == "roundrobin" else None,
        max_iter=max_iter,
        tol=tol,
        ground_truth=gt,
        raise_on_cap=False,
    )
    t0 = time.perf_counter()
    exit_code = 0
    if algorithm == "vi":
        res = value_iteration(model, J0, config)
        trace, J, Q = res.trace, res.J, None
        converged = res.converged
    elif algorithm == "pi":
        out = policy_iteration(model, _parse_mu0(mu0, model), config)
        trace, J, Q = out.trace, out.values[-1], None
        converged = out.termination in ("optimal-certified", "stuck")
        click.echo(f"termination: {out.termination}")
    elif algorithm == "mpi":
        out = modified_policy_iteration(model, _parse_mu0(mu0, model), J0, config)
        trace, J, Q = out.trace, out.J, None
        converged = True
    elif algorithm == "mixed":
        out = mixed_vpi(model, config)
        trace, J, Q = out.trace, out.J, out.Q
        converged = out.converged
    else:
        out = lp_variant_vpi(model, config)
        trace, J, Q = out.trace, out.J, out.Q
        converged = out.converged
    trace.model_hash = model_hash(model)
    if trace_out:
        write_trace(trace_out, trace, fmt)
        click.echo(f"trace written to {trace_out} ({len(trace.rows)} rows)")
    click.echo(f"final J: {np.array2string(np.asarray(J), precision=10)}")
    if Q is not None:
        click.echo(f"final Q: {np.array2string(np.asarray(Q), precision=10)}")
    click.echo(f"iterations: {len(trace.rows)}, residual: {trace.final_residual:g}, "
               f"backups: {trace.op_count}, wall: {time.perf_counter() - t0:.3f}s")
    if gt is not None:
        gap = sup_dist(np.asarray(J), gt[0])
        click.echo(f"distance to declared optimum: {gap:g}")
        if gap > max(tol * 10, 1e-8):
            with np.errstate(invalid="ignore"):
                worst = int(np.argmax(np.where(np.asarray(J) == gt[0], 0.0,
                                               np.abs(np.asarray(J) - gt[0]))))
            click.echo(f"note: final value differs from the declared optimum "
                       f"at state {model.state_names[worst]!r}")
    report = verify_certificates(model, trace, gt)
    if report.checks:
        click.echo(report.summary())
    if not converged:
        click.echo("did not reach the residual tolerance", err=True)
        exit_code = 1
    sys.exit(exit_code)


@main.command()
@click.argument("name")
def reproduce(name):
    """Run a scripted scenario (or 'all') and report pass/fail."""
    names = sorted(SCENARIOS) if name == "all" else [name]
    ok = True
    for n in names:
        try:
            rep = run_scenario(n)
        except KeyError as e:
            click.echo(str(e), err=True)
            sys.exit(2)
        click.echo(rep.render())
        ok = ok and rep.passed
    sys.exit(0 if ok else 1)


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--algorithms", default="vi,mixed",
              help="comma-separated subset of vi,pi,mpi,mixed,lp")
@click.option("--j0", default="zero")
@click.option("--nk", default="10")
@click.option("--mu0", default="greedy", help="initial policy for pi/mpi")
@click.option("--tol", type=float, default=None)
@click.option("--max-iter", type=int, default=10_000)
@click.option("--trace-out", type=click.Path(), default=None,
              help="prefix; one trace file per algorithm")
def compare(path, algorithms, j0, nk, mu0, tol, max_iter, trace_out):
    """Run several algorithms from a shared start and tabulate."""
    try:
        model, gt = read_model(path)
    except ModelFileError as e:
        click.echo(f"parse error: {e}", err=True)
        sys.exit(2)
    algos = [a.strip() for a in algorithms.split(",") if a.strip()]
    for a in algos:
        if a not in ALGORITHMS:
            raise click.UsageError(f"unknown algorithm {a!r}")
        if a == "lp" and model.regime != "P":
            raise click.UsageError("the lp variant needs a nonnegative-cost model")
    tol = tol if tol is not None else _default_tol()
    J0 = _parse_vector(j0, model, gt)
    nk_val: object = nk if nk == "exact" else int(nk)
    rows = []
    for a in algos:
        config = SolverConfig(
            algorithm=a, J0=J0,
            Q0=h_backup(model, J0) if a in ("mixed", "lp") else None,
            nk=nk_val, bstrategy=FullB(), max_iter=max_iter, tol=tol,
            ground_truth=gt, raise_on_cap=False, snapshot_iterates=False)
        t0 = time.perf_counter()
        note = ""
        try:
            if a == "vi":
                res = value_iteration(model, J0, config)
                trace, J = res.trace, res.J
                note = "converged" if res.converged else "cap"
            elif a == "pi":
                out = policy_iteration(model, _parse_mu0(mu0, model), config)
                trace, J = out.trace, out.values[-1]
                note = out.termination
            elif a == "mpi":
                out = modified_policy_iteration(
                    model, _parse_mu0(mu0, model), J0, config)
                trace, J = out.trace, out.J
                note = "converged"
            elif a == "mixed":
                out = mixed_vpi(model, config)
                trace, J = out.trace, out.J
                note = "converged" if out.converged else "cap"
            else:
                out = lp_variant_vpi(model, config)
                trace, J = out.trace, out.J
                note = "converged" if out.converged else "cap"
        except SolverCapError as e:
            trace, J = e.trace, None
            note = "cap"
        wall = time.perf_counter() - t0
        dist = "" if (gt is None or J is None) else f"{sup_dist(J, gt[0]):.2e}"
        rows.append((a, len(trace.rows), f"{trace.final_residual:.2e}",
                     trace.op_count, dist, note, f"{wall:.3f}s"))
        if trace_out:
            write_trace(f"{trace_out}.{a}.csv", trace, "csv")
    header = ("algorithm", "iters", "residual", "backups", "dist", "note", "wall")
    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
    for rec in [header] + rows:
        click.echo("  ".join(str(v).ljust(w) for v, w in zip(rec, widths)))
    sys.exit(0)


@main.command()
@click.option("--suite", type=click.Choice(["default", "wide"]), default="default")
@click.option("--seeds", type=int, default=3)
@click.option("--sizes", default="10,25,50", help="comma-separated state counts")
@click.option("--format", "fmt", type=click.Choice(["json", "table"]), default="json")
def bench(suite, seeds, sizes, fmt):
    """Timed seeded workloads over random models."""
    size_list = [int(s) for s in sizes.split(",")]
    if suite == "wide":
        size_list = sorted(set(size_list + [100, 200]))
    records = []
    for size in size_list:
        for seed in range(seeds):
            for regime in ("D", "P"):
                model, Jstar = random_model(seed, num_states=size,
                                            controls_per_state=2, regime=regime)
                J0 = np.zeros(size)
                cfg = SolverConfig(algorithm="mixed", J0=J0,
                                   Q0=h_backup(model, J0), nk=10,
                                   bstrategy=FullB(), tol=1e-9, max_iter=5000,
                                   raise_on_cap=False, snapshot_iterates=False)
                t0 = time.perf_counter()
                out = mixed_vpi(model, cfg)
                t_mixed = time.perf_counter() - t0
                t0 = time.perf_counter()
                vi = value_iteration(model, J0, SolverConfig(
                    algorithm="vi", tol=1e-9, max_iter=20_000, raise_on_cap=False))
                t_vi = time.perf_counter() - t0
                records.append({
                    "size": size, "seed": seed, "regime": regime,
                    "mixed_iters": len(out.trace.rows),
                    "mixed_backups": out.trace.op_count,
                    "mixed_wall_s": round(t_mixed, 4),
                    "mixed_dist": float(sup_dist(out.J, Jstar)),
                    "vi_iters": len(vi.trace.rows),
                    "vi_backups": vi.trace.op_count,
                    "vi_wall_s": round(t_vi, 4),
                })
    if fmt == "json":
        click.echo(json.dumps(records, indent=2))
    else:
        keys = list(records[0].keys())
        click.echo("  ".join(keys))
        for r in records:
            click.echo("  ".join(str(r[k]) for k in keys))
    sys.exit(0)


@main.command("export-fixture")
@click.argument("name")
@click.argument("out", type=click.Path())
def export_fixture(name, out):
    """Write a named fixture (with ground truth) as a model file."""
    try:
        fx = fixture(name)
    except KeyError as e:
        click.echo(str(e), err=True)
        click.echo(f"known fixtures: {', '.join(fixture_names())}")
        sys.exit(2)
    write_model(out, fx.model, (fx.Jstar, fx.Qstar))
    click.echo(f"wrote {out}")
    sys.exit(0)


if __name__ == "__main__":
    main()
