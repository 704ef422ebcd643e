"""Wall-clock comparison of the numba and numpy kernel backends.

Each case runs once per backend for warm-up (JIT compilation is excluded
from the timings), then ``--repeat`` times; the best time is reported
together with the largest absolute difference between the two backends'
outputs.

    python benchmarks/bench_backends.py --paths 20000 --repeat 3
"""

import argparse
import json
import os
import time

import numpy as np

from holderlab import charfn, girsanov, malliavin, rng, sde
from holderlab.coeffs import build_truncated
from holderlab.lab import REGISTRY

BACKENDS = ("numba", "numpy")


def _cases(n):
    var = REGISTRY.get("holder-var").spec
    weier = REGISTRY.get("weierstrass05").spec
    tc_var = build_truncated(var, validate=False)
    tc_w = build_truncated(weier, validate=False)
    samples = np.random.default_rng(0).normal(size=n)
    thetas = charfn.inversion_thetas(8.0, 129)
    return {
        "normals": lambda: rng.normals(1, n, 64),
        "euler": lambda: sde.simulate_euler(var, sde.SimGrid(0.0, 1.0, 100), n, 1).x_terminal,
        "events": lambda: sde.simulate_events(var, 1.0, 0.0625, n, 1, 64, 1e-2).supinc,
        "window": lambda: girsanov.simulate_window(tc_w, 0.0, 0.0625, 64, n, 1).weights.log_z,
        "malliavin": lambda: malliavin.ibp_weights(tc_var, "X", "one", 1, 0.1, n, 1).H1,
        "charfn": lambda: charfn.localized_charfn(samples, thetas, 0.0, 1.0).estimates,
    }


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(n_paths, repeat):
    rows = []
    for name, fn in _cases(n_paths).items():
        res = {}
        for b in BACKENDS:
            os.environ["HOLDERLAB_BACKEND"] = b
            fn()
            res[b] = _time(fn, repeat)
        diff = float(np.max(np.abs(np.asarray(res["numba"][1]) - np.asarray(res["numpy"][1]))))
        rows.append({"case": name, "n_paths": n_paths, "numba_s": res["numba"][0],
                     "numpy_s": res["numpy"][0], "speedup": res["numpy"][0] / res["numba"][0],
                     "max_abs_diff": diff})
    os.environ.pop("HOLDERLAB_BACKEND", None)
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=20_000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", help="also write the rows to this file")
    a = p.parse_args()
    rows = run(a.paths, a.repeat)
    print(f"{'case':<10} {'numba s':>9} {'numpy s':>9} {'speedup':>8} {'max |diff|':>11}")
    for r in rows:
        print(f"{r['case']:<10} {r['numba_s']:9.4f} {r['numpy_s']:9.4f} {r['speedup']:8.1f} "
              f"{r['max_abs_diff']:11.3g}")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
