"""Compare the compiled and pure-Python kernel backends.

Times one trajectory integration, one fused observation log-likelihood and
one prior evaluation on the desk scenario, and checks that both backends
agree. Run with ``python benchmarks/bench_kernels.py [--repeat N]``.
"""
import argparse
import timeit

import numpy as np

from seiprd.config import DESK_TRUTH, build_config
from seiprd.harness import load_data, model_spec
from seiprd.kernels import load_backend
from seiprd.model_core import initial_values
from seiprd.observation import MEAN_FLOOR
from seiprd.posterior import PriorConfig


def _cases(spec, data, x):
    sl = spec.layout.slices
    bt, at, ct = spec._arrays
    y0 = initial_values(spec.N, x[0], x[1])
    end = int(data.deaths.days[-1])
    integ_args = (y0, bt, x[sl["beta"]], x[sl["d_L"]][0], x[sl["d_I"]][0], x[sl["d_P"]][0],
                  x[sl["omega"]][0], spec.N, end, spec.substeps_per_day)
    inv_phi = x[sl["inv_phi"]]

    def loglik_args(states):
        return (states, x[sl["d_L"]][0], x[sl["d_I"]][0], at, x[sl["rho_admissions"]],
                ct, x[sl["rho_calls"]], data.deaths.days, data.deaths.counts,
                data.admissions.days, data.admissions.counts, data.calls.days, data.calls.counts,
                1 / inv_phi[0], 1 / inv_phi[1], 1 / inv_phi[2], MEAN_FLOOR)

    prior_args = (x, spec.layout.n_beta, PriorConfig(0.025).hyper)
    return integ_args, loglik_args, prior_args


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200, help="calls per timing (default 200)")
    args = parser.parse_args(argv)

    cfg = build_config()
    spec = model_spec(cfg)
    data, _ = load_data(cfg, spec)
    x = np.array(DESK_TRUTH)
    integ_args, loglik_args, prior_args = _cases(spec, data, x)

    results = {}
    print(f"{'kernel':<22}{'backend':<10}{'us/call':>12}")
    for name in ("cython", "python"):
        try:
            mod = load_backend(name)
        except ImportError:
            print(f"{'(all)':<22}{name:<10}{'unavailable':>12}")
            continue
        states = mod.integrate(*integ_args)
        values = {
            "integrate": states,
            "observation_loglik": mod.observation_loglik(*loglik_args(states)),
            "log_prior": mod.log_prior(*prior_args),
        }
        timers = {
            "integrate": lambda: mod.integrate(*integ_args),
            "observation_loglik": lambda: mod.observation_loglik(*loglik_args(states)),
            "log_prior": lambda: mod.log_prior(*prior_args),
        }
        for kernel, fn in timers.items():
            n = max(1, args.repeat if name == "cython" else args.repeat // 10)
            best = min(timeit.repeat(fn, number=n, repeat=3)) / n
            print(f"{kernel:<22}{name:<10}{best * 1e6:>12.1f}")
            results.setdefault(kernel, {})[name] = (best, values[kernel])

    if all(len(v) == 2 for v in results.values()):
        print()
        for kernel, v in results.items():
            (tc, vc), (tp, vp) = v["cython"], v["python"]
            diff = float(np.max(np.abs(np.asarray(vc) - np.asarray(vp)) / np.maximum(np.abs(vp), 1.0)))
            print(f"{kernel:<22}speed-up {tp / tc:7.1f}x   max rel diff {diff:.1e}")


if __name__ == "__main__":
    main()
