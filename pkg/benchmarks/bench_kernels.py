"""Compare the compiled kernels with the numpy fallback.

Times each kernel on the default network's activation shapes (batch 64)
and one full training step of the default network under each backend.

    python benchmarks/bench_kernels.py [--repeat 50]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from warmstart import _kernels_py

try:
    from warmstart import _ckernels
except ImportError:  # extension not built
    _ckernels = None

# (name, input shape NCHW, out_channels) for the two convolution layers
CONV_CASES = [("conv1", (64, 1, 16, 16), 4), ("conv2", (64, 4, 8, 8), 8)]
POOL_CASES = [("pool1", (64, 4, 16, 16)), ("pool2", (64, 8, 8, 8))]

STEP_SNIPPET = """
import timeit, numpy as np
from warmstart import kernels, nn, init
spec = nn.default_spec()
w = init.cold_init(spec, 0)
rng = np.random.default_rng(0)
x = rng.random((64, 16, 16)); y = nn.one_hot(rng.integers(0, 2, 64))
t = min(timeit.repeat(lambda: nn.loss_and_gradients(spec, w, x, y), number=1, repeat={repeat}))
print(kernels.BACKEND, t)
"""


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_rows(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for name, shape, out_ch in CONV_CASES:
        x = rng.random(shape)
        w = rng.normal(size=(out_ch, shape[1], 3, 3))
        b = rng.normal(size=out_ch)
        dout = rng.normal(size=(shape[0], out_ch, shape[2], shape[3]))
        for label, impl in (("forward", "conv2d_forward"), ("backward", "conv2d_backward")):
            args = (x, w, b, 1, 1) if label == "forward" else (x, w, dout, 1, 1)
            rows.append((f"{name} {label}", *_pair(impl, args, repeat)))
    for name, shape in POOL_CASES:
        x = rng.random(shape)
        rows.append((f"{name} forward", *_pair("maxpool_forward", (x, 2), repeat)))
        out, arg = _kernels_py.maxpool_forward(x, 2)
        dout = rng.normal(size=out.shape)
        rows.append((f"{name} backward", *_pair("maxpool_backward", (dout, arg, 2, shape[2], shape[3]), repeat)))
    return rows


def _pair(impl, args, repeat):
    t_py = _best(lambda: getattr(_kernels_py, impl)(*args), repeat)
    if _ckernels is None:
        return t_py, float("nan")
    t_c = _best(lambda: getattr(_ckernels, impl)(*args), repeat)
    return t_py, t_c


def training_step(backend, repeat):
    env = dict(os.environ)
    if backend == "python":
        env["WARMSTART_KERNELS"] = "python"
    else:
        env.pop("WARMSTART_KERNELS", None)
    out = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(repeat=repeat)],
                         env=env, capture_output=True, text=True, check=True).stdout.split()
    return out[0], float(out[1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)

    print(f"{'kernel':<18} {'numpy (us)':>12} {'cython (us)':>12} {'speedup':>8}")
    for name, t_py, t_c in kernel_rows(args.repeat):
        print(f"{name:<18} {t_py * 1e6:12.1f} {t_c * 1e6:12.1f} {t_py / t_c:8.2f}")

    steps = {}
    for backend in ("python", "cython"):
        used, t = training_step(backend, args.repeat)
        steps[backend] = (used, t)
    print()
    for backend, (used, t) in steps.items():
        print(f"loss+gradients, batch 64, requested {backend:<6} -> ran {used:<6} {t * 1e3:8.2f} ms")
    if _ckernels is not None:
        print(f"end-to-end speedup: {steps['python'][1] / steps['cython'][1]:.2f}x")


if __name__ == "__main__":
    main()
