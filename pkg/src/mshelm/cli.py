"""Command-line front end.

Subcommands: run (full sweep to CSV), reference (mesh-halving check),
spectrum (singular values of one edge), describe (mesh and assumption
report).  Exit codes: 0 success, 1 configuration error, 2 numerical
failure.
"""

import argparse
import sys

import numpy as np

from . import problems
from .galerkin import CoarseSystemError
from .linalg import GramConditioningError, SolverError
from .mesh import MeshError
from .problems import ConfigError

_NUMERICAL = (SolverError, GramConditioningError, CoarseSystemError, np.linalg.LinAlgError)


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad arguments; route that through the
    # config-error path instead so exit codes stay 0/1/2 as documented.
    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    parser = _Parser(prog="mshelm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an m-sweep and write the CSV")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="output directory")

    p_ref = sub.add_parser("reference", help="mesh-halving reference check")
    p_ref.add_argument("--config", required=True)

    p_spec = sub.add_parser("spectrum", help="dump one edge's singular values")
    p_spec.add_argument("--config", required=True)
    p_spec.add_argument("--edge", required=True, type=int)
    p_spec.add_argument("--out", default=None, help="output CSV file (default stdout)")

    p_desc = sub.add_parser("describe", help="mesh and assumption report")
    p_desc.add_argument("--config", required=True)
    return parser


def _cmd_run(args):
    cfg = problems.load_config(args.config)
    if args.out is not None:
        cfg.out_dir = args.out
    result = problems.run_sweep(cfg)
    print(f"wrote {result.csv_path}")
    for row in result.rows:
        status = ";".join(row.flags) or "ok"
        print(
            f"  {row.method:>6} m={row.m} dim={row.coarse_dim} "
            f"e_L2={row.e_L2:.3e} e_H={row.e_H:.3e} [{status}]"
        )
    if any(f.startswith("error:") for row in result.rows for f in row.flags):
        ok = [r for r in result.rows if not any(f.startswith("error:") for f in r.flags)]
        if not ok:
            return 2
    return 0


def _cmd_reference(args):
    cfg = problems.load_config(args.config)
    report = problems.verify_reference(cfg)
    print(f"problem {report['problem']} at h={report['h']:.6g} vs h/2")
    print(f"  e_L2 = {report['e_L2']:.6e} (tol {report['e_L2_tol']:.1e})")
    print(f"  e_H  = {report['e_H']:.6e} (tol {report['e_H_tol']:.1e})")
    print("  PASS" if report["passed"] else "  FAIL (reference not converged)")
    return 0


def _cmd_spectrum(args):
    cfg = problems.load_config(args.config)
    lambdas = problems.spectrum(cfg, args.edge)
    lines = ["j,lambda"]
    lines.extend(f"{j + 1},{v:.12e}" for j, v in enumerate(lambdas))
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as f:
            f.write(text)
        print(f"wrote {args.out}")
    return 0


def _cmd_describe(args):
    cfg = problems.load_config(args.config)
    info = problems.describe(cfg)
    for key in (
        "problem", "k", "nH", "refine", "H", "h", "kH",
        "n_fine_nodes", "n_coarse_nodes", "n_edges",
        "A_min", "A_max", "V_min", "V_max", "beta_min", "beta_max",
    ):
        print(f"{key:>15}: {info[key]}")
    print(f"{'bc':>15}: " + "; ".join(
        f"{side}=" + ",".join(f"[{a:g},{b:g}]{kind}" for a, b, kind in segs)
        for side, segs in info["bc"].items()
    ))
    print(f"{'H bound':>15}: {info['H_admissible']:.6g} (C_P={info['C_P']})")
    print(
        f"{'mesh size':>15}: "
        + ("OK (H within the admissible bound)" if info["mesh_size_ok"]
           else "WARNING: H exceeds the admissible bound; decomposition "
                "theory not guaranteed")
    )
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "reference": _cmd_reference,
    "spectrum": _cmd_spectrum,
    "describe": _cmd_describe,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (ConfigError, MeshError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except _NUMERICAL as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
