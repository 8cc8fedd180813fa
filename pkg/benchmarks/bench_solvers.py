"""Wall-clock timings of the main solves on the standard configuration.

Run with ``python benchmarks/bench_solvers.py [N ...]``.
"""

import sys
import time

from hyperstokes.fields import HarmonicSpec
from hyperstokes.hypgeom import DomainSpec
from hyperstokes.mesh import build_annulus_grid
from hyperstokes.navierstokes import (SolverOptions, assemble_psi_phi, estimate_constants,
                                      ingredients, solve_ns_annulus)
from hyperstokes.stokes import solve_stokes, stokes_rhs


def bench(N):
    spec, harm = DomainSpec(1.0, 1.0), HarmonicSpec(1, 1.0)
    t = {}
    t0 = time.perf_counter()
    g = build_annulus_grid(spec, 1.0, 12.0, N, N)
    _, dF, eta, w = ingredients(spec, harm, g)
    t["divergence"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    solve_stokes(g, stokes_rhs(eta, dF, w, g))
    t["stokes"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    consts = estimate_constants(g, 20, 0, spec, harm)
    t["constants"] = time.perf_counter() - t0
    small = HarmonicSpec(1, 0.05 * consts.dF_threshold / harm.dF_norm())
    _, dF, eta, w = ingredients(spec, small, g)
    Psi, Phi = assemble_psi_phi(eta, dF, w, g)
    t0 = time.perf_counter()
    solve_ns_annulus(g, Psi, Phi, SolverOptions(), small.dF_norm(), consts)
    t["navier_stokes"] = time.perf_counter() - t0
    return t


if __name__ == "__main__":
    sizes = [int(x) for x in sys.argv[1:]] or [64, 128, 256]
    for N in sizes:
        t = bench(N)
        print(f"N={N:4d} " + " ".join(f"{k}={v:.3f}s" for k, v in t.items()))
