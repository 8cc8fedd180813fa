import math

import numpy as np
import pytest
from scipy.integrate import quad

from hyperstokes.calculus import circulation_matrix, ext_derivative, l2_inner, vorticity
from hyperstokes.fields import (CutoffSpec, FieldError, HarmonicSpec, band_cell_range, bump,
                                bump_derivative, compatibility, cutoff, divergence_rhs,
                                harmonic_pair, l1_norm)
from hyperstokes.hypgeom import DomainSpec
from hyperstokes.mesh import GridError, build_annulus_grid

SPEC = DomainSpec(1.0, 1.0)


@pytest.fixture(scope="module")
def grid():
    return build_annulus_grid(SPEC, 1.0, 8.0, 64, 64)


def test_harmonic_spec_validation():
    with pytest.raises(FieldError):
        HarmonicSpec(0, 1.0)
    with pytest.raises(FieldError):
        HarmonicSpec(1, 0.0)
    with pytest.raises(FieldError):
        HarmonicSpec(1.5, 1.0)
    assert HarmonicSpec(1, 1.0).full_disk_energy() == pytest.approx(math.pi)
    assert HarmonicSpec(2, 1.0).full_disk_energy() == pytest.approx(2 * math.pi)
    assert HarmonicSpec(3, -2.0).dF_norm() == pytest.approx(math.sqrt(12 * math.pi))


def test_linear_potential_gives_unit_covector(grid):
    _, dF = harmonic_pair(HarmonicSpec(1, 1.0), grid, "analytic")
    u1, u2 = dF.cartesian_at_centers()
    # centre interpolation of the staggered samples is second order
    assert np.max(np.abs(u1 - 1)) < 5e-3 and np.max(np.abs(u2)) < 5e-3


@pytest.mark.parametrize("n", [1, 2, 3])
def test_discrete_potential_is_closed_and_coclosed(grid, n):
    F, dF = harmonic_pair(HarmonicSpec(n, 1.3, 0.4), grid)
    gam = circulation_matrix(grid) @ dF.flat
    assert np.max(np.abs(gam)) <= 1e-14 * np.max(np.abs(F.values)) + 1e-16
    from hyperstokes.calculus import euclidean_divergence
    div = euclidean_divergence(dF)
    assert np.max(np.abs(div)) <= 1e-10 * np.max(np.abs(dF.flat)) / grid.dr.min()


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_discrete_potential_converges_to_analytic(n):
    errs = []
    for N in (32, 64, 128):
        g = build_annulus_grid(SPEC, 1.0, 6.0, N, N)
        F, _ = harmonic_pair(HarmonicSpec(n, 1.0), g)
        exact = g.r_c[:, None] ** n * np.cos(n * g.theta_c)[None, :]
        errs.append(np.max(np.abs(F.values - exact)))
    assert errs[2] < errs[1] < errs[0]
    assert math.log2(errs[1] / errs[2]) > 1.8


def test_analytic_potential_vorticity_is_small(grid):
    _, dF = harmonic_pair(HarmonicSpec(2, 1.0), grid, "analytic")
    assert np.max(np.abs(vorticity(dF)[1:-1])) < 1e-2


def test_unknown_mode_rejected(grid):
    with pytest.raises(FieldError):
        harmonic_pair(HarmonicSpec(), grid, "bogus")


def test_bump_profile_values():
    assert bump(1.0) == 1.0 and bump(0.5) == 1.0
    assert bump(2.0) == 0.0 and bump(2.5) == 0.0
    assert bump(1.5) == pytest.approx(0.5, abs=1e-15)
    t = np.linspace(0, 3, 601)
    for prof in ("exponential", "quintic"):
        v = bump(t, prof)
        assert np.all(np.diff(v) <= 1e-15)
        assert np.all((v >= 0) & (v <= 1))
        assert np.all(bump_derivative(t, prof) <= 0)


@pytest.mark.parametrize("prof", ["exponential", "quintic"])
def test_bump_derivative_matches_finite_difference(prof):
    t = np.linspace(1.05, 1.95, 19)
    h = 1e-6
    fd = (bump(t + h, prof) - bump(t - h, prof)) / (2 * h)
    assert np.allclose(bump_derivative(t, prof), fd, atol=1e-6)


def test_cutoff_values_on_the_grid(grid):
    eta, deta = cutoff(CutoffSpec.from_domain(SPEC), grid)
    assert eta.at_rho(1.0) == 1.0
    assert eta.at_rho(5.0) == 0.0
    assert 0 < eta.at_rho(3.0) < 1
    rho = grid.rho_c
    assert np.all(eta.values[rho <= 2.0] == 1.0)
    assert np.all(eta.values[rho >= 4.0] == 0.0)
    nz = np.flatnonzero(np.any(deta.ur != 0, axis=1))
    assert grid.r_f[nz].min() >= math.tanh(1.0) - 1e-12
    assert grid.r_f[nz].max() <= math.tanh(2.0) + 1e-12


def test_cutoff_needs_support_inside_grid():
    g = build_annulus_grid(SPEC, 1.0, 3.5, 40, 32)
    with pytest.raises(FieldError):
        cutoff(CutoffSpec.from_domain(SPEC), g)
    with pytest.raises(FieldError):
        CutoffSpec(1.0, 1.0, "boxcar")


def test_misaligned_band_rejected():
    g = build_annulus_grid(SPEC, 1.0, 12.0, 64, 32)
    assert band_cell_range(g, 1.0)[1] > band_cell_range(g, 1.0)[0]
    with pytest.raises(GridError):
        band_cell_range(g, 1.3)


def test_divergence_data_supported_in_band(grid):
    F, _ = harmonic_pair(HarmonicSpec(1, 1.0), grid)
    eta, _ = cutoff(CutoffSpec.from_domain(SPEC), grid)
    h = divergence_rhs(eta, F, grid)
    i0, i1 = band_cell_range(grid, 1.0)
    assert np.all(h.values[:i0] == 0) and np.all(h.values[i1:] == 0)
    assert np.any(h.values[i0:i1] != 0)


def test_pointwise_divergence_sign_for_linear_potential(grid):
    F, _ = harmonic_pair(HarmonicSpec(1, 1.0), grid, "analytic")
    eta, _ = cutoff(CutoffSpec.from_domain(SPEC), grid)
    h = divergence_rhs(eta, F, grid, pointwise=True)
    right = np.cos(grid.theta_c) > 0
    assert np.all(h.values[:, right] >= 0)
    assert np.all(h.values[:, ~right] <= 0)


def test_discrete_and_pointwise_divergence_agree_to_second_order():
    diffs = []
    for N in (64, 128, 256):
        g = build_annulus_grid(SPEC, 1.0, 8.0, N, N)
        F, _ = harmonic_pair(HarmonicSpec(1, 1.0), g)
        eta, _ = cutoff(CutoffSpec.from_domain(SPEC), g)
        a = divergence_rhs(eta, F, g).values
        b = divergence_rhs(eta, F, g, pointwise=True).values
        w = g.weights
        diffs.append(math.sqrt(np.sum((a - b) ** 2 * w) / np.sum(b ** 2 * w)))
    assert diffs[2] < diffs[1] < diffs[0]
    assert math.log2(diffs[1] / diffs[2]) > 1.8


@pytest.mark.parametrize("n", [1, 3])
def test_compatibility_and_negative_control(grid, n):
    F, _ = harmonic_pair(HarmonicSpec(n, 1.0), grid)
    eta, _ = cutoff(CutoffSpec.from_domain(SPEC), grid)
    h = divergence_rhs(eta, F, grid)
    assert abs(compatibility(h, grid)) <= 1e-10 * l1_norm(h, grid)
    h.values = np.abs(h.values)
    assert compatibility(h, grid) > 0.5 * l1_norm(h, grid)


def test_eta_energy_matches_independent_quadrature():
    # n = 1: |grad F|^2 = 1 so the energy is 2 pi int eta(rho(r)) r dr
    g = build_annulus_grid(SPEC, 1.0, 8.0, 256, 256)
    F, dF = harmonic_pair(HarmonicSpec(1, 1.0), g)
    eta, _ = cutoff(CutoffSpec.from_domain(SPEC), g)
    disc = float(np.dot(eta.face_values() * dF.flat ** 2,
                        __import__("hyperstokes.calculus", fromlist=["face_mass"]).face_mass(g)))
    disc += math.pi * g.r_in ** 2
    f = lambda r: eta.at_rho(2 * math.atanh(r)) * r
    exact = 2 * math.pi * (quad(f, 0, math.tanh(1.0))[0] + quad(f, math.tanh(1.0), math.tanh(2.0),
                                                               limit=200)[0])
    assert 1.822 <= exact <= 2.919
    assert disc == pytest.approx(exact, rel=1e-4)
