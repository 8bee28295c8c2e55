"""Compare the compiled and numpy kernel backends.

Times each hot kernel on typical batch sizes, plus one full MJPF step and
one SOM training run, under every available backend.

    python benchmarks/bench_kernels.py [--repeat 200]
"""
import argparse
import timeit

import numpy as np

from trajaware import _kernels as K
from trajaware.learner import LearnConfig, fit_normality
from trajaware.mjpf import MjpfConfig, init, predict_step, update_step
from trajaware.simulator import default_specs, generate
from trajaware.som import SomConfig, som_train


def kernel_cases(rng, n=50):
    means = rng.standard_normal((n, 4))
    a = rng.standard_normal((n, 4, 4))
    covs = a @ a.transpose(0, 2, 1) + np.eye(4)
    controls = rng.standard_normal((n, 2))
    q = np.diag([1e-4, 1e-4, 1e-2, 1e-2])
    r = 0.0025 * np.eye(2)
    cents = rng.standard_normal((100, 4))
    w = rng.random(n)
    w /= w.sum()
    return {
        "kf_predict (50)": lambda: K.kf_predict(means, covs, controls, 0.11, q),
        "kf_update (50)": lambda: K.kf_update(means, covs, np.array([0.1, 0.2]), r),
        "nearest (50 x 100)": lambda: K.nearest(means, cents, 0.25, 0.75),
        "systematic_resample (50)": lambda: K.systematic_resample(w, 0.3),
    }


def mjpf_step_case():
    bank = fit_normality(generate(default_specs(1001)["perimeter"])[0], LearnConfig())
    obs, _ = generate(default_specs(2)["uturn"])
    cfg = MjpfConfig(n_particles=50, seed=0)
    state = {"ps": init(bank, obs[0], cfg), "k": 1}

    def step():
        k = state["k"]
        ps = predict_step(state["ps"], bank, obs[k].t - obs[k - 1].t)
        state["ps"], _ = update_step(ps, obs[k], bank, cfg)
        state["k"] = k + 1 if k + 1 < len(obs) else 1
    return step


def som_case(rng):
    x = rng.standard_normal((1500, 4))
    cfg = SomConfig(epochs=20)
    return lambda: som_train(x, cfg)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    cases["MJPF step (50 particles)"] = mjpf_step_case()
    cases["SOM training (1500 x 11x11, 20 epochs)"] = som_case(rng)
    backends = K.available_backends()
    before = K.backend
    results = {}
    for b in backends:
        K.use_backend(b)
        for name, fn in cases.items():
            n = 3 if name.startswith("SOM") else args.repeat
            fn()
            results[name, b] = min(timeit.repeat(fn, number=1, repeat=n))
    K.use_backend(before)
    width = max(map(len, cases))
    print(f"{'case':<{width}}  " + "  ".join(f"{b:>12}" for b in backends) + ("  speedup" if len(backends) > 1 else ""))
    for name in cases:
        row = [results[name, b] for b in backends]
        line = f"{name:<{width}}  " + "  ".join(f"{t * 1e3:>9.3f} ms" for t in row)
        if len(backends) > 1:
            line += f"  {results[name, 'python'] / results[name, 'compiled']:>6.1f}x"
        print(line)


if __name__ == "__main__":
    main()
