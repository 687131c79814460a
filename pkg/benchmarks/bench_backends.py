#!/usr/bin/env python3
"""Wall-clock comparison of the compiled stepper backend and the pure
numpy fallback on a fixed, deterministic workload.

The backend is chosen at import time, so each side runs in its own child
interpreter (``DISKMIN_BACKEND=pure`` forces the fallback; unset selects
the extension when available).  Run from the repository root:

    python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOADS = ("reference", "ball", "shoot")


def _run_workloads(repeats: int) -> dict:
    import numpy as np

    import diskmin

    sys_ = diskmin.make_nilpotent_kepler()
    p0_ref = np.array([-1.0, 0.0, -2.0, 0.0])
    pt = diskmin.ExtremalPoint.from_z(np.concatenate([np.zeros(4), p0_ref]))

    rng = np.random.default_rng(42)
    raw = rng.normal(size=(20, 4))
    ball = p0_ref + 0.1 * raw / np.linalg.norm(raw, axis=1, keepdims=True)

    def reference():
        for _ in range(10):
            diskmin.propagate_extremal(sys_, pt, t_final=4.0)

    def ball_sweep():
        for p0 in ball:
            z = np.concatenate([np.zeros(4), p0])
            diskmin.propagate_extremal(sys_, diskmin.ExtremalPoint.from_z(z),
                                       t_final=5.0)

    def shoot_once():
        x_f = np.array([-0.5, 0.0, -1.0, 0.0])
        diskmin.shoot(sys_, np.zeros(4), x_f,
                      guess_p0=p0_ref + np.array([0.005, -0.003, 0.004, 0.002]),
                      guess_tf=3.05)

    jobs = {"reference": reference, "ball": ball_sweep, "shoot": shoot_once}
    times = {}
    for name in WORKLOADS:
        job = jobs[name]
        job()  # warm caches and JIT-free import costs out of the timing
        best = min(_timed(job) for _ in range(repeats))
        times[name] = best
    return {"backend": diskmin.active_backend(), "times": times}


def _timed(job) -> float:
    t0 = time.perf_counter()
    job()
    return time.perf_counter() - t0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3,
                    help="timing repeats per workload (best is kept)")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args.worker:
        print(json.dumps(_run_workloads(args.repeats)))
        return 0

    results = {}
    for backend in ("native", "pure"):
        env = dict(os.environ)
        env.pop("DISKMIN_BACKEND", None)
        if backend == "pure":
            env["DISKMIN_BACKEND"] = "pure"
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__),
             "--worker", "--repeats", str(args.repeats)],
            env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            return proc.returncode
        results[backend] = json.loads(proc.stdout)

    got_native = results["native"]["backend"]
    if got_native != "native":
        print(f"note: extension unavailable, default backend is '{got_native}'")

    w = max(len(n) for n in WORKLOADS)
    print(f"{'workload':<{w}}  {'native [ms]':>12}  {'pure [ms]':>12}  {'speedup':>8}")
    for name in WORKLOADS:
        tn = results["native"]["times"][name]
        tp = results["pure"]["times"][name]
        ratio = tp / tn if tn > 0 else float("inf")
        print(f"{name:<{w}}  {1e3 * tn:>12.3f}  {1e3 * tp:>12.3f}  {ratio:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
