"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the median wall time of each workload per backend and the speed-up.
"""

import argparse
import statistics
import time

import numpy as np

from tubecert import _kernels, qp, tmpc
from tubecert import netmodel as nm


def _time(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def workloads():
    rng = np.random.default_rng(0)
    D = rng.normal(size=(2000, 3))
    G = rng.normal(size=(3, 400))

    def zono():
        for _ in range(20):
            _kernels.zonotope_support(D, G)

    qps = []
    for _ in range(40):
        n, m = 30, 80
        L = rng.normal(size=(n, n))
        H = L @ L.T + np.eye(n)
        A = rng.normal(size=(m, n))
        b = rng.uniform(0, 1, size=m)
        qps.append(qp.QpProblem(H, rng.normal(size=n) * 5, A, b))

    def qp_batch():
        for p in qps:
            qp.solve_qp(p)

    net = nm.builtin_scenarios()["trucks-case1"]
    ctls = tmpc.build_controllers(net, N=20)

    def sim():
        r = np.random.default_rng(3)
        for _ in range(5):
            x0 = tmpc.sample_initial_state(net, "tmpc", r, ctls)
            tmpc.simulate(net, "tmpc", x0, 100, ctls)

    return {"zonotope support (20 x 2000 dirs x 400 gens)": zono,
            "dense QP (40 x n=30, m=80)": qp_batch,
            "tube MPC trucks (5 runs x 100 steps, N=20)": sim}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = _kernels.available_backends()
    if len(backends) < 2:
        print("compiled kernels are not built; only the python backend is available")
    jobs = workloads()
    prev = _kernels.backend()
    print(f"{'workload':48s}" + "".join(f"{b:>12s}" for b in backends) + ("     speed-up" if len(backends) > 1 else ""))
    try:
        for name, fn in jobs.items():
            times = []
            for b in backends:
                _kernels.use_backend(b)
                fn()  # warm-up
                times.append(_time(fn, args.repeat))
            row = f"{name:48s}" + "".join(f"{t * 1e3:10.1f}ms" for t in times)
            if len(times) > 1:
                row += f"{times[1] / times[0]:12.2f}x"
            print(row)
    finally:
        _kernels.use_backend(prev)


if __name__ == "__main__":
    main()
