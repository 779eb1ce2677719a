"""Command-line front end.

    pilotwave state-eval  --config C [--out DIR]
    pilotwave velocity    --config C [--out DIR]
    pilotwave trajectories --config C [--out DIR]
    pilotwave relax       --config C [--out DIR] [--threads N]
    pilotwave verify {current,tise,ladder,asymptotic,bound} [--seed S]

Exit codes: 0 ok, 1 verification failure, 2 config error, 3 runtime failure.
"""
import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from ._backend import set_num_threads
from .config import load
from .dynamics import integrate_trajectory, velocities
from .ensemble import (Box, EquilibriumInitial, GaussianDensity, GridSpec, UniformDensity,
                       run_relaxation, write_report_csv)
from .errors import ConfigError, PilotWaveError, StepFailure
from .kernels import IntegratorOptions
from .states import eval_state_points
from .verify import DEFAULT_SEED, SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _fmt(v):
    return repr(float(v))


def _meta(cfg, command):
    return {"pilotwave": __version__, "command": command, "config_sha256": cfg.digest(),
            "seed": cfg.seed}


def _write_csv(path, meta, header, rows):
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _sample_points(cfg):
    s = cfg.sampling
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(s.y_lo, s.y_hi, s.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _coord_header(n):
    return ["y"] if n == 1 else [f"y{r + 1}" for r in range(n)]


def _opts(cfg):
    t = cfg.tolerances
    return IntegratorOptions(abs_tol=t.abs_tol, rel_tol=t.rel_tol, min_step=t.min_step,
                             node_gap=t.node_gap, max_halvings=t.max_halvings)


def cmd_state_eval(cfg, out):
    state = cfg.build_state()
    Y = _sample_points(cfg)
    u, _, L = eval_state_points(state, Y, cfg.sampling.t)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        scale = np.exp(L)
        logp = 2.0 * L + np.log(np.abs(u) ** 2)
    rows = [[_fmt(c) for c in y] + [_fmt(z.real * s), _fmt(z.imag * s), _fmt(lp)]
            for y, z, s, lp in zip(Y, u, scale, logp)]
    path = os.path.join(out, "state_eval.csv")
    _write_csv(path, _meta(cfg, "state-eval"),
               _coord_header(Y.shape[1]) + ["re", "im", "log_psi_sq"], rows)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_velocity(cfg, out):
    state = cfg.build_state()
    Y = _sample_points(cfg)
    V, _ = velocities(state, Y, cfg.sampling.t)
    n = Y.shape[1]
    rows = []
    for y, v in zip(Y, V):
        node = not np.all(np.isfinite(v))
        vals = [""] * n if node else [_fmt(c) for c in v]
        rows.append([_fmt(c) for c in y] + vals + [int(node)])
    vcols = ["v"] if n == 1 else [f"v{r + 1}" for r in range(n)]
    path = os.path.join(out, "velocity.csv")
    _write_csv(path, _meta(cfg, "velocity"), _coord_header(n) + vcols + ["node"], rows)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_trajectories(cfg, out):
    state = cfg.build_state()
    tr = cfg.trajectories
    if not tr.starts:
        raise ConfigError("trajectories.starts: no starting points given")
    if tr.t1 == tr.t0:
        raise ConfigError("trajectories: t1 must differ from t0")
    times = np.linspace(tr.t0, tr.t1, tr.samples)
    opts = _opts(cfg)
    rows = []
    failed = 0
    for i, y0 in enumerate(tr.starts):
        try:
            traj = integrate_trajectory(state, y0, tr.t0, tr.t1, opts, sample_times=times)
        except StepFailure as exc:
            failed += 1
            rows.append([i, _fmt(exc.t)] + [_fmt(c) for c in np.atleast_1d(exc.y)] + ["failed"])
            continue
        order = np.argsort(times) if tr.t1 > tr.t0 else np.argsort(times)[::-1]
        for k in order:
            rows.append([i, _fmt(traj.times[k])] + [_fmt(c) for c in traj.points[k]] + ["ok"])
    path = os.path.join(out, "trajectories.csv")
    _write_csv(path, _meta(cfg, "trajectories"),
               ["traj", "t"] + _coord_header(cfg.n_particles) + ["status"], rows)
    print(f"wrote {len(tr.starts)} trajectories to {path}; {failed} failed")
    if failed / len(tr.starts) > cfg.tolerances.failed_fraction:
        return EXIT_RUNTIME
    return EXIT_OK


def build_rho0(cfg, state, grid):
    r = cfg.rho0
    box = Box(r.support_lo, r.support_hi)
    if r.kind == "uniform":
        return UniformDensity(box)
    if r.kind == "gaussian":
        return GaussianDensity(box, r.mu, r.sigma)
    return EquilibriumInitial(state, box, grid)


def build_grid(cfg):
    g = cfg.grid
    return GridSpec(g.lo, g.hi, g.n_cells, g.subsample, g.quad_order)


def relax_checks(cfg, report):
    """Pass/fail lines for a finished relaxation run: ``[(name, value, limit, ok)]``."""
    tol = cfg.tolerances
    N = report.column("N_t")
    hc = report.column("H_pw_coarse")
    hx = report.column("H_pw")
    drift = float(np.max(np.abs(N / N[0] - 1.0)))
    rise = float(np.max(hc - hc[0]))
    ident = float(np.max(np.abs(report.identity_residuals())))
    hdrift = float(np.max(np.abs(hx - hx[0])))
    checks = [
        ("normaliser drift max|N_t/N_0 - 1|", drift, tol.norm_drift, drift <= tol.norm_drift),
        ("coarse H rise max(H(t) - H(0))", rise, tol.h_increase, rise <= tol.h_increase),
        ("exact H drift max|H(t) - H(0)|", hdrift, tol.h_exact_drift, hdrift < tol.h_exact_drift),
        ("identity max|H - H_q - ln N|", ident, tol.identity, ident < tol.identity),
    ]
    if cfg.rho0.kind == "equilibrium":
        hmax = float(np.max(hc))
        checks.append(("equilibrium max H", hmax, tol.equilibrium_h, hmax < tol.equilibrium_h))
    return checks


def cmd_relax(cfg, out):
    if cfg.n_particles > 2:
        raise ConfigError("relax supports at most 2 particles")
    if not cfg.times or cfg.times[0] != 0.0:
        raise ConfigError("times.values: the first sample time must be 0")
    state = cfg.build_state()
    grid = build_grid(cfg)
    rho0 = build_rho0(cfg, state, grid)
    try:
        report = run_relaxation(state, rho0, grid, cfg.times, _opts(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    meta = _meta(cfg, "relax")
    write_report_csv(report, os.path.join(out, "relax_report.csv"), meta)
    checks = relax_checks(cfg, report)
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    for name, value, limit, ok in checks:
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name} = {value:.3e} (limit {limit:g})")
    frac = report.failed_fraction()
    lines.append(f"failed point fraction = {frac:.3e} (limit {cfg.tolerances.failed_fraction:g})")
    overall = all(c[3] for c in checks)
    lines.append(f"summary: {'PASS' if overall else 'FAIL'}")
    with open(os.path.join(out, "relax_summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines[len(meta):]))
    if frac > cfg.tolerances.failed_fraction:
        print("transport failure fraction above threshold", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if overall else EXIT_FAIL


def cmd_verify(suite, seed):
    cases = run_suite(suite, seed)
    for c in cases:
        flag = "PASS" if c.passed else "FAIL"
        note = f"  [{c.note}]" if c.note else ""
        print(f"{flag}  {c.name}: deviation {c.deviation:.3e} (tol {c.tolerance:.3g}){note}")
    ok = all(c.passed for c in cases)
    print(f"verify {suite}: {'PASS' if ok else 'FAIL'} ({sum(c.passed for c in cases)}/{len(cases)})")
    return EXIT_OK if ok else EXIT_FAIL


def _parser():
    p = argparse.ArgumentParser(prog="pilotwave", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pilotwave {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="output directory (default: run.output_dir)")
    common.add_argument("--threads", type=int, metavar="N", help="numba worker threads")
    common.add_argument("--seed", type=int, metavar="U64", help="override run.seed")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("state-eval", "tabulate psi on the sampling grid"),
                       ("velocity", "tabulate the velocity field on the sampling grid"),
                       ("trajectories", "integrate trajectories from the configured starts"),
                       ("relax", "run a relaxation experiment")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--config", required=True, metavar="PATH")
    sp = sub.add_parser("verify", parents=[common], help="run a built-in property suite")
    sp.add_argument("suite", choices=SUITES)
    sp.add_argument("--config", metavar="PATH", help="accepted for symmetry; unused")
    return p


COMMANDS = {"state-eval": cmd_state_eval, "velocity": cmd_velocity,
            "trajectories": cmd_trajectories, "relax": cmd_relax}


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads:
        set_num_threads(args.threads)
    if args.command == "verify":
        return cmd_verify(args.suite, DEFAULT_SEED if args.seed is None else args.seed)
    try:
        cfg = load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out = args.out or cfg.output_dir
        os.makedirs(out, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PilotWaveError, FloatingPointError, ArithmeticError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
