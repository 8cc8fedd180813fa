import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hyperstokes.hypgeom import DomainSpec
from hyperstokes.mesh import (AnnulusGrid, GridError, OneFormField, ScalarField, TensorField,
                              build_annulus_grid, dump_csv, integrate, refine)

SPEC = DomainSpec(1.0, 1.0)


def test_radii_from_geodesic():
    g = build_annulus_grid(SPEC, 1.0, 8.0, 64, 128)
    assert g.r_in == pytest.approx(math.tanh(0.5), rel=1e-15)
    assert g.r_out == pytest.approx(math.tanh(4.0), rel=1e-15)
    assert (g.N_r, g.N_th) == (64, 128)


@pytest.mark.parametrize("args", [(1.0, 1.0, 64, 64), (2.0, 1.0, 64, 64),
                                  (1.0, 8.0, 4, 64), (1.0, 8.0, 64, 15), (1.0, 8.0, 64, 17)])
def test_invalid_grids_rejected(args):
    with pytest.raises(GridError):
        build_annulus_grid(SPEC, *args)


def test_underresolved_band_rejected():
    with pytest.raises(GridError, match="band"):
        build_annulus_grid(SPEC, 1.0, 12.0, 16, 64)


def test_resource_guard():
    with pytest.raises(GridError):
        build_annulus_grid(SPEC, 1.0, 8.0, 8192, 4096)


def test_band_faces_aligned():
    g = build_annulus_grid(SPEC, 1.0, 12.0, 100, 64)
    i0, i1 = g.band_cells(2.0, 4.0)
    assert g.rho_f[i0] == pytest.approx(2.0, abs=1e-14)
    assert g.rho_f[i1] == pytest.approx(4.0, abs=1e-14)


def test_quadrature_sums_to_area():
    g = build_annulus_grid(SPEC, 1.0, 8.0, 64, 128)
    total = integrate(g, np.ones((g.N_r, g.N_th)))
    assert total == pytest.approx(math.pi * (g.r_out ** 2 - g.r_in ** 2), rel=1e-12)


def test_area_oracle_small_annulus():
    g = build_annulus_grid(SPEC, 1.0, 2.0, 16, 32)
    val = integrate(g, ScalarField(g, np.ones((g.N_r, g.N_th))))
    assert val == pytest.approx(math.pi * (math.tanh(1.0) ** 2 - math.tanh(0.5) ** 2), rel=1e-12)


def test_integrate_zero_and_grid_mismatch():
    g = build_annulus_grid(SPEC, 1.0, 8.0, 32, 32)
    h = build_annulus_grid(SPEC, 1.0, 8.0, 40, 32)
    assert integrate(g, np.zeros((g.N_r, g.N_th))) == 0.0
    with pytest.raises(GridError):
        integrate(g, ScalarField(h, np.zeros((h.N_r, h.N_th))))
    with pytest.raises(ValueError):
        integrate(g, np.zeros((g.N_r, g.N_th)), "weird")


def test_hyperbolic_measure_uses_volume_weight():
    g = build_annulus_grid(SPEC, 1.0, 2.0, 32, 32)
    val = integrate(g, np.ones((g.N_r, g.N_th)), "hyperbolic")
    # hyperbolic area of the geodesic annulus between radii 1 and 2 (a = 1)
    exact = 2 * math.pi * (math.cosh(2.0) - math.cosh(1.0))
    assert val == pytest.approx(exact, rel=1e-3)


def test_refine_doubles_and_nests():
    g = build_annulus_grid(SPEC, 1.0, 8.0, 64, 128)
    f = refine(g)
    assert (f.N_r, f.N_th) == (128, 256)
    assert np.array_equal(f.rho_f[::2], g.rho_f)
    assert integrate(f, np.ones((f.N_r, f.N_th))) == pytest.approx(
        integrate(g, np.ones((g.N_r, g.N_th))), rel=1e-12)


def test_quadrature_second_order():
    g = build_annulus_grid(SPEC, 1.0, 6.0, 24, 16)
    errs = []

    def f(grid):
        R, T = np.meshgrid(grid.r_c, grid.theta_c, indexing="ij")
        return np.cos(3 * R) * (1 + 0.5 * np.cos(T))

    # int cos(3r) r dr dtheta * 2pi, analytic
    lo, hi = g.r_in, g.r_out
    F = lambda r: np.cos(3 * r) / 9 + r * np.sin(3 * r) / 3
    exact = 2 * math.pi * (F(hi) - F(lo))
    for _ in range(4):
        errs.append(abs(integrate(g, f(g)) - exact))
        g = refine(g)
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders > 1.9) & (orders < 2.1))


def test_node_masks_partition():
    g = build_annulus_grid(SPEC, 1.0, 6.0, 40, 32)
    interior, inner, outer = g.node_masks()
    total = interior.astype(int) + inner + outer
    assert np.all(total == 1)


def test_field_shape_validation():
    g = build_annulus_grid(SPEC, 1.0, 6.0, 40, 32)
    with pytest.raises(GridError):
        ScalarField(g, np.zeros((3, 3)))
    with pytest.raises(GridError):
        OneFormField(g, np.zeros((g.N_r, g.N_th)), np.zeros((g.N_r, g.N_th)))


def test_flat_round_trip(rng):
    g = build_annulus_grid(SPEC, 1.0, 6.0, 40, 32)
    x = rng.standard_normal(g.n_full)
    u = OneFormField.from_flat(g, x)
    assert np.array_equal(u.flat, x)
    d = rng.standard_normal(g.dof_index().size)
    v = OneFormField.from_flat(g, d)
    assert np.array_equal(v.dofs, d)
    assert v.boundary_max("inner") == 0 and v.boundary_max("outer") == 0


def test_cartesian_rotation_of_radial_field():
    g = build_annulus_grid(SPEC, 1.0, 6.0, 40, 32)
    u = OneFormField(g, np.ones((g.N_r + 1, g.N_th)), np.zeros((g.N_r, g.N_th)))
    u1, u2 = u.cartesian_at_centers()
    assert np.allclose(u1, np.cos(g.theta_c)[None, :])
    assert np.allclose(u2, np.sin(g.theta_c)[None, :])


def test_tensor_rotation_identity():
    g = build_annulus_grid(SPEC, 1.0, 6.0, 40, 32)
    one_c = np.ones((g.N_r, g.N_th))
    one_n = np.zeros((g.N_r + 1, g.N_th))
    t = TensorField(g, one_c, one_c, one_n, one_n)
    t11, t12, t21, t22 = t.cartesian_at_centers()
    assert np.allclose(t11, 1) and np.allclose(t22, 1)
    assert np.allclose(t12, 0) and np.allclose(t21, 0)


def test_csv_dump_format():
    g = build_annulus_grid(SPEC, 1.0, 6.0, 40, 32)
    s = ScalarField(g, np.full((g.N_r, g.N_th), 1 / 3))
    text = dump_csv(s)
    lines = text.split("\n")
    assert lines[0] == "r,theta,y1,y2,c1"
    assert "\r" not in text
    assert len(lines) == g.n_cells + 2
    assert lines[1].split(",")[-1] == "0.33333333333333331"
    u = OneFormField.zeros(g)
    buf = io.StringIO()
    dump_csv(u, buf)
    assert buf.getvalue().startswith("r,theta,y1,y2,c1,c2\n")


@given(st.integers(8, 60), st.integers(8, 40), st.floats(4.5, 14.0))
def test_grid_invariants_property(N_r, half, R_out):
    N_th = 2 * half
    try:
        g = build_annulus_grid(SPEC, 1.0, R_out, N_r, N_th)
    except GridError:
        return
    assert np.all(np.diff(g.r_f) > 0)
    assert np.all(g.cell_area > 0) and np.all(g.node_area > 0)
    assert g.cell_area.sum() * g.N_th == pytest.approx(math.pi * (g.r_out ** 2 - g.r_in ** 2),
                                                       rel=1e-12)
    assert g.node_area.sum() == pytest.approx(g.cell_area.sum(), rel=1e-12)
