"""Benchmark the jitted advection kernel against the pure-numpy fallback.

The package routes spectral.advect through a numba kernel unless the
environment variable NSJUMP_PURE_NUMPY=1 is set, in which case every call
uses the scipy.signal.convolve2d fallback.  Here both implementations are
called directly so a single process can time the pair on identical inputs
and confirm they agree to round-off.

Run:  python3 benchmarks/bench_advection.py
"""

import gc
import time

import numpy as np

from nsjump.spectral import (
    SpectralField,
    _advect_fallback,
    _advect_kernel,
    random_solenoidal_field,
)


def _time_fn(fn, loops):
    gc_was_enabled = gc.isenabled()
    if gc_was_enabled:
        gc.disable()
    t0 = time.perf_counter()
    for _ in range(loops):
        fn()
    elapsed = time.perf_counter() - t0
    if gc_was_enabled:
        gc.enable()
    return elapsed / loops


def _pick_loops(fn, target_s=0.5, max_loops=20000):
    t0 = time.perf_counter()
    fn()
    dt = max(time.perf_counter() - t0, 1e-7)
    return int(np.clip(target_s / dt, 1, max_loops))


def main():
    rng = np.random.default_rng(2026)
    cutoffs = (2, 4, 8, 16, 24)
    blocks = 5

    print(f"{'n':>4} | {'numba (ms)':>11} | {'numpy (ms)':>11} | {'speedup':>8} | {'max |diff|':>10}")
    print("-" * 58)

    for n in cutoffs:
        u = random_solenoidal_field(n, rng)
        w = random_solenoidal_field(n, rng)
        au, aw = u.amp, w.amp

        jit_fn = lambda: _advect_kernel(au, aw, n)
        ref_fn = lambda: _advect_fallback(au, aw, n)

        # First call compiles the kernel; exclude it from the timing.
        out_jit = jit_fn()
        out_ref = ref_fn()
        diff = float(np.max(np.abs(out_jit - out_ref)))

        loops_jit = _pick_loops(jit_fn)
        loops_ref = _pick_loops(ref_fn)

        t_jit = min(_time_fn(jit_fn, loops_jit) for _ in range(blocks))
        t_ref = min(_time_fn(ref_fn, loops_ref) for _ in range(blocks))

        print(f"{n:4d} | {t_jit * 1e3:11.4f} | {t_ref * 1e3:11.4f} | "
              f"{t_ref / t_jit:8.2f} | {diff:10.2e}")

    # Also exercise the public entry point once per path so a regression in
    # the dispatch (SpectralField wrapping, block alignment) would show up.
    u = random_solenoidal_field(8, rng)
    w = random_solenoidal_field(8, rng)
    from nsjump.spectral import advect

    out = advect(u, w)
    assert isinstance(out, SpectralField) and out.cutoff == 8
    print("\ndispatch check at n=8: ok")


if __name__ == "__main__":
    main()
