"""Compare the numba kernels with their numpy fallbacks.

Run: python benchmarks/bench_kernels.py [--sizes 1000 100000] [--repeat 5]

Also times one full calibration on a synthetic 14-view session with each
backend (the backend is chosen at import time, so that part re-runs this
script in a subprocess with CATASTEREO_DISABLE_NUMBA set).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from catastereo import _kernels as K

INTR = np.array([1144.1, 1139.5, 539.5, 959.5, 0.0, -0.12, 0.03])


def make_inputs(n, rng):
    pts = np.column_stack([rng.uniform(-0.6, 0.6, (n, 2)), rng.uniform(0.5, 4.0, n)])
    xd = rng.uniform(-0.5, 0.5, (n, 2))
    p1 = np.hstack([np.eye(3), np.zeros((3, 1))])
    p2 = np.hstack([np.eye(3), [[-0.05], [0.0], [0.0]]])
    x1 = pts[:, :2] / pts[:, 2:]
    x2 = (pts[:, :2] + [-0.05, 0.0]) / pts[:, 2:]
    return {
        "project_jacobian": ((pts, INTR), K._project_jacobian_numpy, K._project_jacobian_numba),
        "undistort": ((xd, -0.12, 0.03, 10, 1e-10), K._undistort_numpy, K._undistort_numba),
        "triangulate": ((p1, p2, x1, x2), K._triangulate_numpy, K._triangulate_numba),
    }


def best_of(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def calibration_time():
    code = (
        "import time\n"
        "from catastereo import fov, simulator\n"
        "from catastereo.calibration import calibrate\n"
        "sim = simulator.build_rig(fov.AdapterConfig.reference())\n"
        "obs = simulator.generate_chessboard_session(sim, 14, sigma=0.5, seed=1).observations\n"
        "calibrate(obs)\n"
        "ts = []\n"
        "for _ in range(5):\n"
        "    t = time.perf_counter(); calibrate(obs); ts.append(time.perf_counter() - t)\n"
        "print(min(ts))\n"
    )
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, CATASTEREO_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[label] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1_000, 100_000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-calibration", action="store_true")
    args = ap.parse_args(argv)
    if not K.HAS_NUMBA:
        sys.exit("numba is not installed")

    rng = np.random.default_rng(0)
    # compile outside the timed region
    for args_, _, fast in make_inputs(8, rng).values():
        fast(*args_)

    print(f"{'kernel':<18}{'n':>9}{'numpy [ms]':>13}{'numba [ms]':>13}{'speedup':>10}")
    for n in args.sizes:
        for name, (inputs, slow, fast) in make_inputs(n, rng).items():
            t_np = best_of(slow, inputs, args.repeat)
            t_nb = best_of(fast, inputs, args.repeat)
            print(f"{name:<18}{n:>9}{t_np * 1e3:>13.3f}{t_nb * 1e3:>13.3f}{t_np / t_nb:>9.1f}x")

    if not args.skip_calibration:
        t = calibration_time()
        print(f"\ncalibrate, 14 views, best of 5: numba {t['numba']:.3f} s, numpy {t['numpy']:.3f} s")


if __name__ == "__main__":
    main()
