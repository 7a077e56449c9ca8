"""Command-line entry point: ``python -m clampedbeam <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 failed
verdict under ``study --strict``.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .capacity import GENERATORS, bracket, coercivity_eigen, penalty_form, relative_gaps
from .config import build_config, load_config, parse_text
from .errors import CoercivityError, ConfigError, ConvergenceError, MeshError
from .material import coercivity_estimate
from .regimes import Regime, TRACE_SLOTS, RegimeSpec
from .study import (energy_bound_report, face_average_u1, prepare_limit, run_study, solve3d,
                    strain_seminorm)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERDICT = 0, 2, 3, 4


def _parser():
    p = argparse.ArgumentParser(prog="clampedbeam", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve3d", "solve the 3D clamped cylinder for one eps"),
                           ("limit", "solve the limit rod problem"),
                           ("capacity", "capacitary potentials, Gram matrices and penalty blocks"),
                           ("study", "convergence sweep over eps"),
                           ("coercivity", "material and penalty coercivity checks")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="key=value configuration file")
        s.add_argument("--out", help="output directory (overrides output.dir)")
        s.add_argument("--tol", type=float, help="solver tolerance (overrides solver.tol)")
        s.add_argument("--threads", type=int, default=1, help="concurrent eps points in a study")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="extra configuration entry; may repeat")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "solve3d":
            s.add_argument("--eps", type=float, help="thickness (default: first study.eps)")
        if name == "limit":
            s.add_argument("--samples", type=int, default=101, help="uniform y1 samples")
        if name == "study":
            s.add_argument("--strict", action="store_true", help="exit 4 if any verdict fails")
    return p


def _config(args):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides.update(parse_text(item))
    if args.tol is not None:
        overrides["solver.tol"] = repr(args.tol)
    if args.out is not None:
        overrides["output.dir"] = args.out
    if args.config:
        return load_config(args.config, overrides)
    return build_config(overrides)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _g(x):
    return f"{float(x):.10e}"


def cmd_solve3d(cfg, args, out):
    eps = args.eps if args.eps is not None else cfg.eps[0]
    s = solve3d(cfg, eps)
    energy = strain_seminorm(s.U, s.mesh)
    _write_csv(out / "solve3d.csv",
               ("epsilon", "r_epsilon", "ndof", "cg_iters", "residual", "strain_seminorm", "u1_face_mean"),
               [(_g(eps), _g(s.r_eps), s.ndof, s.stats.iterations, _g(s.stats.residual), _g(energy),
                 _g(face_average_u1(s.U, s.mesh)))])
    nodes = np.column_stack([s.mesh.nodes, s.U.nodal])
    np.savetxt(out / "solve3d_nodes.csv", nodes, delimiter=",", fmt="%.10e",
               header="x1,x2,x3,U1,U2,U3", comments="")
    text = f"{cfg.regime.header()}\neps={eps:g} dof={s.ndof} iters={s.stats.iterations} " \
           f"residual={s.stats.residual:.3e} time={s.seconds:.1f}s\n"
    (out / "solve3d.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_limit(cfg, args, out):
    ctx = prepare_limit(cfg)
    sol = ctx.solution
    y1 = np.linspace(0.0, 1.0, args.samples)
    F = sol.fields(y1)
    rows = [(_g(t), _g(v[0]), _g(v[2]), _g(v[3]), _g(v[1])) for t, v in zip(y1, F["val"])]
    _write_csv(out / "limit.csv", ("y1", "zeta1", "zeta2", "zeta3", "c"), rows)
    _write_csv(out / "trace.csv", TRACE_SLOTS, [[_g(v) for v in sol.trace]])
    text = f"{ctx.regime.header()}\ntrace " + " ".join(f"{k}={v:.6e}" for k, v in zip(TRACE_SLOTS, sol.trace))
    text += f"\nenergy={sol.energy:.6e} penalty={sol.penalty_energy:.6e} work={sol.work:.6e}\n"
    (out / "limit.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def _penalty_blocks(cset, rho=1.0):
    """Active blocks of the three critical penalties at a common ``rho``."""
    out = {}
    for tag in (Regime.CRITICAL_3, Regime.CRITICAL_1, Regime.CRITICAL_THIRD):
        P = penalty_form(RegimeSpec(tag, 1.0, 0, rho), cset)
        out[tag] = (P, coercivity_eigen(P))
    return out


def cmd_capacity(cfg, args, out):
    A0 = cfg.material.voigt_at(np.zeros((1, 3)))[0]
    sets = bracket(A0, cfg.patch, cfg.capacity_L, n_side=cfg.capacity_n_side, grading=cfg.capacity_grading)
    rows = []
    for (L, ff), cs in sorted(sets.items()):
        for i in range(6):
            for j in range(6):
                rows.append((_g(L), ff, f"G[{GENERATORS[i]},{GENERATORS[j]}]", _g(cs.G[i, j])))
    _write_csv(out / "capacity.csv", ("L", "farfield", "entry", "value"), rows)
    lines = [cfg.regime.header()]
    for L in sorted({k[0] for k in sets}):
        nat = sets[(L, "natural")]
        lines.append(f"L={L:g} gram diag natural " + " ".join(f"{v:.6e}" for v in np.diag(nat.G)))
        lines.append(f"L={L:g} gram diag clamped " + " ".join(f"{v:.6e}" for v in np.diag(sets[(L, 'clamped')].G)))
        lines.append(f"L={L:g} relative gaps " + " ".join(f"{v:.3e}" for v in relative_gaps(sets, L)))
        lines.append(f"L={L:g} a=" + np.array2string(nat.a, precision=6) + " b=" +
                     np.array2string(nat.b, precision=6).replace("\n", ""))
        lines.append(f"L={L:g} orthogonality residual max {nat.orthogonality_residuals().max():.3e}")
        lines.append(f"L={L:g} outer-shell energy share " + " ".join(f"{v:.3e}" for v in nat.shell_energy_fraction()))
        for tag, (P, lam) in _penalty_blocks(nat).items():
            lines.append(f"L={L:g} {tag.value} block (rho=1) " + np.array2string(P.active_block(), precision=6)
                         .replace("\n", "") + f" min eig {lam:.6e}")
    text = "\n".join(lines) + "\n"
    (out / "capacity.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_study(cfg, args, out):
    report = run_study(cfg, out_dir=out, threads=max(1, args.threads))
    bound = energy_bound_report(cfg, report)
    with open(out / "energy_bound.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epsilon", "energy_ratio"))
        for e, r in bound["rows"]:
            w.writerow((_g(e), "n/a" if r is None else _g(r)))
    print(report.summary(), end="")
    if any(r.error for r in report.rows) and all(r.error for r in report.rows):
        return EXIT_SOLVER
    if args.strict and not report.passed:
        return EXIT_VERDICT
    return EXIT_OK


def cmd_coercivity(cfg, args, out):
    lines = [cfg.regime.header(), f"material coercivity estimate {coercivity_estimate(cfg.material):.6e}"]
    if cfg.regime.is_critical:
        ctx = prepare_limit(cfg)
        lines.append(f"penalty smallest eigenvalue {ctx.coercivity:.6e} (rho={cfg.regime.rho:g})")
    else:
        lines.append("regime is not critical: penalty form is zero")
    text = "\n".join(lines) + "\n"
    (out / "coercivity.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {"solve3d": cmd_solve3d, "limit": cmd_limit, "capacity": cmd_capacity,
            "study": cmd_study, "coercivity": cmd_coercivity}


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out)
    except (ConfigError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, CoercivityError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
