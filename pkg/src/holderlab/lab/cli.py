"""Command line entry point: ``lab run | list | rerun``.

Exit codes: 0 when every check passed, 2 when some check failed, 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from ..errors import HolderLabError
from .runner import rerun, run_experiment
from .scenarios import list_scenarios


def _parser():
    p = argparse.ArgumentParser(prog="lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run the experiment described by a TOML config")
    r.add_argument("config")
    r.add_argument("--outdir")
    rr = sub.add_parser("rerun", help="re-run a manifest and compare output digests")
    rr.add_argument("manifest")
    rr.add_argument("--outdir")
    for q in (r, rr):
        q.add_argument("--workers", type=int, help="sets HOLDERLAB_WORKERS")
        q.add_argument("--backend", choices=("numba", "numpy"), help="sets HOLDERLAB_BACKEND")
    ls = sub.add_parser("list", help="dump the scenario registry")
    ls.add_argument("--json", action="store_true")
    return p


def _print_checks(checks, out):
    for c in checks:
        se = "" if c.se is None else f" se={c.se:.3g}"
        out.write(f"{'PASS' if c.passed else 'FAIL'} {c.name}: value={c.value:.6g} "
                  f"tol={c.tolerance:.6g}{se}\n")


def main(argv=None):
    args = _parser().parse_args(argv)
    out = sys.stdout
    if getattr(args, "workers", None) is not None:
        os.environ["HOLDERLAB_WORKERS"] = str(args.workers)
    if getattr(args, "backend", None) is not None:
        os.environ["HOLDERLAB_BACKEND"] = args.backend
    try:
        if args.cmd == "list":
            items = list_scenarios()
            if args.json:
                out.write(json.dumps(items, indent=2) + "\n")
            else:
                for s in items:
                    out.write(f"{s['name']:<16} eps={s['eps']:<5g} alpha={s['alpha']:<5g} "
                              f"{s['description']}\n")
            return 0
        if args.cmd == "run":
            res = run_experiment(args.config, args.outdir)
            _print_checks(res.checks, out)
            out.write(f"outputs in {res.outdir}\n")
            return res.exit_code
        rr = rerun(args.manifest, args.outdir)
        _print_checks(rr.result.checks, out)
        if rr.code_changed:
            out.write("note: code digest differs from the manifest\n")
        for f in rr.mismatched:
            out.write(f"MISMATCH {f}\n")
        if not rr.mismatched:
            out.write(f"all {len(rr.result.manifest['outputs'])} outputs byte-identical\n")
        return rr.exit_code
    except (HolderLabError, OSError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
