"""Acceptance suite: one test per criterion at the stated tolerances.

Each test records a PASS or FAIL line; the lines are printed together in the
terminal summary (see ``conftest.py``).
"""

import io
import math

import numpy as np
import pytest

from hyperstokes.calculus import curl_inner, flux_div_matrix, l2_inner, l2_inner_hyperbolic, norms
from hyperstokes.cli import run
from hyperstokes.divsolve import solve_divergence
from hyperstokes.fields import (CutoffSpec, HarmonicSpec, band_cell_range, compatibility, cutoff,
                                divergence_rhs, harmonic_pair, l1_norm)
from hyperstokes.hypgeom import DomainSpec, disk_to_geodesic, geodesic_to_disk
from hyperstokes.mesh import build_annulus_grid
from hyperstokes.navierstokes import (ExhaustionSchedule, SolverOptions, assemble_psi_phi,
                                      check_apriori_bound, check_energy_identity,
                                      estimate_constants, exhaust_domains, ingredients,
                                      solve_ns_annulus)
from hyperstokes.stokes import weak_residual
from hyperstokes.verify import inequality_suite, nontriviality, potential_flow_test
from conftest import STANDARD, UNIT, stokes_run

pytestmark = pytest.mark.acceptance


def _ns_case(N, fraction=0.05):
    g = build_annulus_grid(STANDARD, 1.0, 12.0, N, N)
    consts = estimate_constants(g, 100, 0, STANDARD, UNIT)
    c = fraction * consts.dF_threshold / math.sqrt(math.pi)
    harm = HarmonicSpec(1, c)
    _, dF, eta, w = ingredients(STANDARD, harm, g)
    Psi, Phi = assemble_psi_phi(eta, dF, w, g)
    return g, consts, harm, Psi, Phi


def test_criterion_01_geometry_round_trip(criterion):
    R = np.concatenate([np.geomspace(1e-3, 20, 2000), np.linspace(1e-3, 20, 2000)])
    err = max(abs(disk_to_geodesic(1.0, geodesic_to_disk(1.0, float(x))) - x) / max(1.0, x)
              for x in R)
    criterion(1, "geometry round trip", err <= 1e-12, f"max scaled error {err:.2e}")


def test_criterion_02_conformal_l2_identity(criterion):
    # fine radial resolution: the face quadrature is second order in the radial step
    g = build_annulus_grid(STANDARD, 1.0, 12.0, 4096, 16)
    worst, same = 0.0, 0.0
    for n in (1, 2, 3, 4):
        _, dF = harmonic_pair(HarmonicSpec(n, 1.0), g, "analytic")
        exact = math.pi * n * (g.r_out ** (2 * n) - g.r_in ** (2 * n))
        hyp = l2_inner_hyperbolic(dF, dF)
        worst = max(worst, abs(hyp / exact - 1))
        same = max(same, abs(hyp / l2_inner(dF, dF) - 1))
    criterion(2, "conformal L2 identity", worst <= 1e-6 and same <= 1e-12,
              f"relative error {worst:.2e}, route gap {same:.1e}")


def test_criterion_03_compatibility(criterion):
    worst = 0.0
    for a, R0 in ((1.0, 1.0), (0.5, 2.0)):
        spec = DomainSpec(a, R0)
        g = build_annulus_grid(spec, R0, 6 * R0, 256, 256)
        eta, _ = cutoff(CutoffSpec.from_domain(spec), g)
        for n in (1, 2, 3):
            F, _ = harmonic_pair(HarmonicSpec(n, 1.0), g)
            h = divergence_rhs(eta, F, g)
            worst = max(worst, abs(compatibility(h, g)) / l1_norm(h, g))
    criterion(3, "compatibility", worst <= 1e-10, f"max |int h| / ||h||_L1 = {worst:.2e}")


def test_criterion_04_divergence_solve(criterion, run256):
    g = run256["grid"]
    F, eta = run256["F"], run256["eta"]
    h = divergence_rhs(eta, F, g)
    w, rep = solve_divergence(g, h, R0=1.0)
    i0, i1 = band_cell_range(g, 1.0)
    outside = (np.any(w.ur[: i0 + 1]) or np.any(w.ur[i1:]) or np.any(w.ut[:i0])
               or np.any(w.ut[i1:]))
    lam0 = np.random.default_rng(0).standard_normal((i1 - i0) * g.N_th)
    w2, _ = solve_divergence(g, h, R0=1.0, lam0=lam0, tol=1e-13)
    w3, _ = solve_divergence(g, h, R0=1.0, method="direct")
    scale = np.max(np.abs(w.flat))
    restart = max(np.max(np.abs(w2.flat - w.flat)), np.max(np.abs(w3.flat - w.flat))) / scale
    ok = rep.residual_l2 <= 1e-8 and not outside and restart <= 1e-10
    criterion(4, "divergence solve", ok,
              f"residual {rep.residual_l2:.1e}, support ok {not outside}, restart gap {restart:.1e}")


def test_criterion_05_stokes_solve(criterion, run256):
    r = run256
    g, u = r["grid"], r["u"]
    T_dual = r["report"].T_dual
    res = weak_residual(u, r["p"]) / T_dual
    wt = r["w_tilde"]
    div = flux_div_matrix(g) @ wt.flat / np.repeat(g.cell_area, g.N_th)
    div_rel = np.max(np.abs(div)) / np.max(np.abs(wt.flat))
    trace = float(np.max(np.abs(u.ur[0])))
    ok = res <= 1e-8 and div_rel <= 1e-8 and trace <= 1e-13
    criterion(5, "Stokes solve", ok,
              f"weak residual {res:.1e}, divergence {div_rel:.1e}, inner trace {trace:.1e}")


def test_criterion_06_nontriviality(criterion, run256, run512):
    reps = [nontriviality(r["w"], r["dF"], r["eta"], r["u"], r["grid"], r["harmonic"])
            for r in (run256, run512)]
    a, b = reps
    order = math.log2(a.gap / b.gap)
    ok = (a.pairing < 0 and a.relative_gap <= 0.005 and b.gap < a.gap and order >= 1
          and 1.822 <= a.eta_energy <= 2.919)
    criterion(6, "nontriviality identity", ok,
              f"pairing {a.pairing:.6f}, energy {a.eta_energy:.6f}, "
              f"relative gap {a.relative_gap:.1e}, order {order:.2f}")


def test_criterion_07_non_potential_flow(criterion, run256, run512):
    ratios = [potential_flow_test(r["u"], r["grid"]).vorticity_ratio for r in (run256, run512)]
    # potential control: the discrete vorticity of the sampled unit gradient
    Ns = np.array([64, 128, 256, 512])
    vort = []
    for N in Ns:
        g = build_annulus_grid(STANDARD, 1.0, 12.0, int(N), int(N))
        _, dF = harmonic_pair(UNIT, g, "analytic")
        vort.append(math.sqrt(max(curl_inner(dF, dF), 0.0)))
    order = -np.polyfit(np.log(Ns), np.log(vort), 1)[0]
    ok = min(ratios) >= 1e-3 and order >= 1.99
    criterion(7, "non-potential flow", ok,
              f"vorticity ratios {ratios[0]:.3f}, {ratios[1]:.3f}; control order {order:.4f}")


def test_criterion_08_inequalities(criterion):
    g = build_annulus_grid(STANDARD, 1.0, 12.0, 128, 128)
    rep = inequality_suite(g, seed=0, count=100, tol=0.02)
    finite = all(np.isfinite(v) for v in rep.harmonic_ratios.values())
    ok = rep.poincare_pass == 100 and rep.ladyzhenskaya_finite and finite
    criterion(8, "inequality suite", ok,
              f"Poincare {rep.poincare_pass}/100 (max {rep.poincare_max:.3f}), "
              f"Ladyzhenskaya max {rep.ladyzhenskaya_max:.3f}")


def test_criterion_09_navier_stokes_small_data(criterion):
    g, consts, harm, Psi, Phi = _ns_case(128)
    wR, _, trace = solve_ns_annulus(g, Psi, Phi, SolverOptions(), harm.dF_norm(), consts)
    en = check_energy_identity(wR, Psi, Phi)
    ap = check_apriori_bound(wR, harm.dF_norm(), consts)
    cancel = max(abs(en.b_psi_w_w), abs(en.b_w_w_w)) / en.energy
    iters = max(trace.iterations.values())
    ok = iters <= 50 and en.residual <= 1e-8 and cancel <= 1e-10 and ap.satisfied
    criterion(9, "Navier-Stokes small data", ok,
              f"iterations per stage {iters}, energy residual {en.residual:.1e}, "
              f"cancellation {cancel:.1e}, bound {ap.lhs:.2e} <= {ap.rhs:.2e}")


def test_criterion_10_exhaustion(criterion):
    g = ExhaustionSchedule((6.0,), density=8, N_th=64).grid(STANDARD, 6.0)
    consts = estimate_constants(g, 100, 0, STANDARD, UNIT)
    harm = HarmonicSpec(1, 0.05 * consts.dF_threshold / math.sqrt(math.pi))
    rep = exhaust_domains(STANDARD, ExhaustionSchedule((6.0, 8.0, 10.0), density=8, N_th=64),
                          harm, constants=consts)
    d = rep.deltas
    ok = all(y < x for x, y in zip(d, d[1:])) and max(rep.glue_gaps) <= 1e-8
    criterion(10, "exhaustion", ok,
              f"differences {', '.join(f'{x:.2e}' for x in d)}; glue gap {max(rep.glue_gaps):.1e}")


def test_criterion_11_truncation(criterion):
    # equal radial density on both truncations
    out = []
    for R_max, N_r in ((12.0, 176), (16.0, 240)):
        r = stokes_run(N_r, R_max=R_max, N_th=128)
        u = r["u"]
        out.append((l2_inner(r["w"], r["dF"]), norms(u)["H1_full"],
                    math.sqrt(curl_inner(u, u))))
    changes = [abs(b - a) / abs(b) for a, b in zip(*out)]
    criterion(11, "truncation sensitivity", max(changes) <= 0.01,
              "relative changes " + ", ".join(f"{c:.1e}" for c in changes))


def test_criterion_12_determinism(criterion):
    args = ["verify", "--set", "N_r=64", "--set", "N_th=64", "--seed", "7", "--reproducible"]
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        code = run(args, stdout=buf)
        outs.append((code, buf.getvalue()))
    ok = outs[0] == outs[1] and outs[0][0] == 0
    criterion(12, "determinism", ok, f"{len(outs[0][1])} byte reports identical: {outs[0] == outs[1]}")
