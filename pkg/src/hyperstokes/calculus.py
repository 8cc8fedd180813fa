"""Discrete exterior calculus on the staggered polar grid.

Everything is evaluated in Euclidean disk coordinates using the conformal
identities of the Poincare chart:

* ``g(u, v) = pw (u1 v1 + u2 v2)`` and ``Vol = dy / pw``;
* ``-d*u = pw div(u)`` (Euclidean divergence of the component vector);
* ``du = curl(u) dy1 ^ dy2`` and ``g(du, dv) Vol = pw curl(u) curl(v) dy``;
* ``((u, v)) = int pw curl(u) curl(v) dy + 2 a^2 int u . v dy``.

Linear maps are assembled once per grid as sparse matrices acting on the flat
1-form state (see :class:`~hyperstokes.mesh.OneFormField`).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .hypgeom import christoffel_rate
from .mesh import (AnnulusGrid, OneFormField, ScalarField, TensorField,
                   GridError, BC_BOTH, BC_FREE)


class CalculusError(ValueError):
    pass


# ---------------------------------------------------------------------------
# index helpers

def _ur(g, i, j):
    return i * g.N_th + j % g.N_th


def _ut(g, i, j):
    return g.n_ur + i * g.N_th + j % g.N_th


def _wall(g, k, j):
    return g.n_ur + g.n_ut + k * g.N_th + j % g.N_th


class _Builder:
    def __init__(self, shape):
        self.shape = shape
        self.r, self.c, self.v = [], [], []

    def add(self, rows, cols, vals):
        rows, cols, vals = np.broadcast_arrays(rows, cols, vals)
        self.r.append(rows.ravel())
        self.c.append(cols.ravel())
        self.v.append(np.asarray(vals, dtype=float).ravel())

    def csr(self):
        if not self.r:
            return sp.csr_matrix(self.shape)
        m = sp.coo_matrix((np.concatenate(self.v),
                           (np.concatenate(self.r), np.concatenate(self.c))),
                          shape=self.shape)
        return m.tocsr()


def _cached(name):
    def deco(fn):
        def wrapper(grid):
            if name not in grid._cache:
                grid._cache[name] = fn(grid)
            return grid._cache[name]
        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        return wrapper
    return deco


@_cached("flux_div")
def flux_div_matrix(g: AnnulusGrid):
    """Net outward flux through each cell (divergence times cell area)."""
    b = _Builder((g.n_cells, g.n_full))
    I, J = np.meshgrid(np.arange(g.N_r), np.arange(g.N_th), indexing="ij")
    row = I * g.N_th + J
    b.add(row, _ur(g, I + 1, J), g.r_f[I + 1] * g.dth)
    b.add(row, _ur(g, I, J), -g.r_f[I] * g.dth)
    b.add(row, _ut(g, I, J + 1), g.dr[I])
    b.add(row, _ut(g, I, J), -g.dr[I])
    return b.csr()


@_cached("grad")
def grad_matrix(g: AnnulusGrid):
    """Gradient of a center scalar extended by wall values.

    Input layout: ``N_r * N_th`` center values followed by ``2 * N_th`` wall
    values at ``theta_c`` (inner then outer).
    """
    n_in = g.n_cells + 2 * g.N_th
    b = _Builder((g.n_full, n_in))
    N, T = g.N_r, g.N_th

    def cen(i, j):
        return i * T + j % T

    def wal(k, j):
        return g.n_cells + k * T + j % T

    J = np.arange(T)
    # radial components on interior faces
    I = np.arange(1, N)[:, None]
    d = (g.r_c[1:] - g.r_c[:-1])[:, None]
    b.add(_ur(g, I, J), cen(I, J), 1.0 / d)
    b.add(_ur(g, I, J), cen(I - 1, J), -1.0 / d)
    # radial components on the walls
    b.add(_ur(g, 0, J), cen(0, J), 1.0 / g.dual_width[0])
    b.add(_ur(g, 0, J), wal(0, J), -1.0 / g.dual_width[0])
    b.add(_ur(g, N, J), wal(1, J), 1.0 / g.dual_width[-1])
    b.add(_ur(g, N, J), cen(N - 1, J), -1.0 / g.dual_width[-1])
    # angular components
    I = np.arange(N)[:, None]
    s = 1.0 / (g.r_c[:, None] * g.dth)
    b.add(_ut(g, I, J), cen(I, J), s)
    b.add(_ut(g, I, J), cen(I, J - 1), -s)
    for k, r in ((0, g.r_f[0]), (1, g.r_f[-1])):
        b.add(_wall(g, k, J), wal(k, J), 1.0 / (r * g.dth))
        b.add(_wall(g, k, J), wal(k, J - 1), -1.0 / (r * g.dth))
    return b.csr()


@_cached("circulation")
def circulation_matrix(g: AnnulusGrid):
    """Circulation around each dual cell (vorticity density times node area)."""
    b = _Builder((g.n_nodes, g.n_full))
    N, T = g.N_r, g.N_th
    J = np.arange(T)[None, :]
    for i in range(N + 1):
        row = i * T + J
        if i < N:
            b.add(row, _ut(g, i, J), g.r_c[i] * g.dth)
        else:
            b.add(row, _wall(g, 1, J), g.r_f[-1] * g.dth)
        if i > 0:
            b.add(row, _ut(g, i - 1, J), -g.r_c[i - 1] * g.dth)
        else:
            b.add(row, _wall(g, 0, J), -g.r_f[0] * g.dth)
        h = g.node_hi[i] - g.node_lo[i]
        b.add(row, _ur(g, i, J), -h)
        b.add(row, _ur(g, i, J - 1), h)
    return b.csr()


@_cached("frame")
def frame_matrices(g: AnnulusGrid):
    """Interpolations and covariant-derivative components in the polar frame.

    Returns a dict of sparse matrices acting on the flat state:
    ``ur_c, ut_c`` (values at centers), ``ur_n, ut_n`` (values at nodes),
    ``rr, tt`` (covariant derivative at centers) and ``rt, tr`` (at nodes).
    The first index is the derivative direction.
    """
    N, T = g.N_r, g.N_th
    nc, nn = g.n_cells, g.n_nodes
    I, J = np.meshgrid(np.arange(N), np.arange(T), indexing="ij")
    cen = I * T + J
    kc = christoffel_rate(g.r_c)[I]
    kn_r = christoffel_rate(g.r_f)

    ur_c = _Builder((nc, g.n_full))
    ur_c.add(cen, _ur(g, I, J), 0.5)
    ur_c.add(cen, _ur(g, I + 1, J), 0.5)
    ut_c = _Builder((nc, g.n_full))
    ut_c.add(cen, _ut(g, I, J), 0.5)
    ut_c.add(cen, _ut(g, I, J + 1), 0.5)

    grr = _Builder((nc, g.n_full))
    grr.add(cen, _ur(g, I + 1, J), 1.0 / g.dr[I])
    grr.add(cen, _ur(g, I, J), -1.0 / g.dr[I])
    gtt = _Builder((nc, g.n_full))
    s = 1.0 / (g.r_c[I] * g.dth)
    gtt.add(cen, _ut(g, I, J + 1), s)
    gtt.add(cen, _ut(g, I, J), -s)

    In, Jn = np.meshgrid(np.arange(N + 1), np.arange(T), indexing="ij")
    nod = In * T + Jn
    ur_n = _Builder((nn, g.n_full))
    ur_n.add(nod, _ur(g, In, Jn), 0.5)
    ur_n.add(nod, _ur(g, In, Jn - 1), 0.5)

    ut_n = _Builder((nn, g.n_full))
    grt = _Builder((nn, g.n_full))
    Jr = np.arange(T)
    for i in range(N + 1):
        row = i * T + Jr
        if 0 < i < N:
            lo, hi = g.r_c[i - 1], g.r_c[i]
            t = (g.r_f[i] - lo) / (hi - lo)
            c_lo, c_hi = _ut(g, i - 1, Jr), _ut(g, i, Jr)
        elif i == 0:
            lo, hi, t = g.r_f[0], g.r_c[0], 0.0
            c_lo, c_hi = _wall(g, 0, Jr), _ut(g, 0, Jr)
        else:
            lo, hi, t = g.r_c[-1], g.r_f[-1], 1.0
            c_lo, c_hi = _ut(g, N - 1, Jr), _wall(g, 1, Jr)
        ut_n.add(row, c_lo, 1.0 - t)
        ut_n.add(row, c_hi, t)
        grt.add(row, c_hi, 1.0 / (hi - lo))
        grt.add(row, c_lo, -1.0 / (hi - lo))

    gtr = _Builder((nn, g.n_full))
    s = 1.0 / (g.r_f[In] * g.dth)
    gtr.add(nod, _ur(g, In, Jn), s)
    gtr.add(nod, _ur(g, In, Jn - 1), -s)

    m = {k: v.csr() for k, v in (("ur_c", ur_c), ("ut_c", ut_c), ("ur_n", ur_n),
                                 ("ut_n", ut_n))}
    dc = sp.diags(1.0 / g.r_c[I].ravel())
    dn = sp.diags(1.0 / g.r_f[In].ravel())
    kcd = sp.diags(kc.ravel())
    knd = sp.diags(kn_r[In].ravel())
    # Euclidean polar-frame gradient plus Christoffel corrections
    m["rr"] = (grr.csr() - kcd @ m["ur_c"]).tocsr()
    m["tt"] = (gtt.csr() + dc @ m["ur_c"] + kcd @ m["ur_c"]).tocsr()
    m["rt"] = (grt.csr() - knd @ m["ut_n"]).tocsr()
    m["tr"] = (gtr.csr() - dn @ m["ut_n"] - knd @ m["ut_n"]).tocsr()
    m["euclid_rr"] = grr.csr()
    m["euclid_tt"] = (gtt.csr() + dc @ m["ur_c"]).tocsr()
    m["euclid_rt"] = grt.csr()
    m["euclid_tr"] = (gtr.csr() - dn @ m["ut_n"]).tocsr()
    return m


def _center_weight(g):
    return np.repeat(g.pw_c * g.cell_area, g.N_th)


def _node_weight(g):
    return np.repeat(g.pw_f * g.node_area, g.N_th)


def face_mass(g: AnnulusGrid):
    """Diagonal L2 weights of the flat 1-form state (walls carry none)."""
    key = "face_mass"
    if key not in g._cache:
        w = np.concatenate([np.repeat(g.face_r_weight, g.N_th),
                            np.repeat(g.face_t_weight, g.N_th),
                            np.zeros(2 * g.N_th)])
        g._cache[key] = w
    return g._cache[key]


@_cached("energy_full")
def energy_matrix_full(g: AnnulusGrid):
    """Matrix of ((u, v)) on the full flat state."""
    C = circulation_matrix(g)
    wn = np.repeat(g.pw_f / g.node_area, g.N_th)
    a2 = g.a ** 2
    return (C.T @ sp.diags(wn) @ C + 2.0 * a2 * sp.diags(face_mass(g))).tocsr()


@_cached("energy_dof")
def energy_matrix(g: AnnulusGrid):
    """Matrix of ((u, v)) restricted to zero-boundary unknowns (SPD)."""
    idx = g.dof_index()
    return energy_matrix_full(g)[idx][:, idx].tocsr()


@_cached("dirichlet_dof")
def euclidean_dirichlet_matrix(g: AnnulusGrid):
    """Euclidean Dirichlet energy ``int |grad w|^2 dy`` on zero-boundary unknowns.

    For fields vanishing on the boundary this equals ``int curl^2 + div^2``.
    """
    C = circulation_matrix(g)
    D = flux_div_matrix(g)
    wn = np.repeat(1.0 / g.node_area, g.N_th)
    wc = np.repeat(1.0 / g.cell_area, g.N_th)
    K = C.T @ sp.diags(wn) @ C + D.T @ sp.diags(wc) @ D
    idx = g.dof_index()
    return K.tocsr()[idx][:, idx].tocsr()


@_cached("h1_dof")
def h1_matrix(g: AnnulusGrid):
    """Matrix of the covariant seminorm ``int g(nabla u, nabla v) Vol`` on zero-boundary unknowns."""
    m = frame_matrices(g)
    wc = sp.diags(_center_weight(g))
    wn = sp.diags(_node_weight(g))
    K = (m["rr"].T @ wc @ m["rr"] + m["tt"].T @ wc @ m["tt"]
         + m["rt"].T @ wn @ m["rt"] + m["tr"].T @ wn @ m["tr"])
    idx = g.dof_index()
    return K.tocsr()[idx][:, idx].tocsr()


# ---------------------------------------------------------------------------
# pointwise operations

def _check(u, v):
    if not u.grid.same_as(v.grid):
        raise GridError("fields live on different grids")


def pairing(u: OneFormField, v: OneFormField) -> ScalarField:
    """``g(u, v)`` at cell centers."""
    _check(u, v)
    g = u.grid
    u1, u2 = u.cartesian_at_centers()
    v1, v2 = v.cartesian_at_centers()
    return ScalarField(g, g.pw_c[:, None] * (u1 * v1 + u2 * v2))


def codifferential(u: OneFormField) -> ScalarField:
    """``d*u`` at cell centers: minus the pairing weight times the flux divergence."""
    g = u.grid
    div = (flux_div_matrix(g) @ u.flat).reshape(g.N_r, g.N_th) / g.cell_area[:, None]
    return ScalarField(g, -g.pw_c[:, None] * div)


def euclidean_divergence(u: OneFormField) -> np.ndarray:
    g = u.grid
    return (flux_div_matrix(g) @ u.flat).reshape(g.N_r, g.N_th) / g.cell_area[:, None]


def ext_derivative(f: ScalarField) -> OneFormField:
    """Gradient 1-form of a center scalar.

    Wall values are taken from ``f.wall`` when present, otherwise linearly
    extrapolated from the two nearest centers.
    """
    g = f.grid
    wall = f.wall
    if wall is None:
        t0 = (g.r_f[0] - g.r_c[0]) / (g.r_c[1] - g.r_c[0])
        t1 = (g.r_f[-1] - g.r_c[-2]) / (g.r_c[-1] - g.r_c[-2])
        wall = np.stack([f.values[0] + t0 * (f.values[1] - f.values[0]),
                         f.values[-2] + t1 * (f.values[-1] - f.values[-2])])
    x = np.concatenate([f.values.ravel(), np.asarray(wall).ravel()])
    return OneFormField.from_flat(g, grad_matrix(g) @ x)


def vorticity(u: OneFormField) -> np.ndarray:
    """Euclidean vorticity density ``d1 u2 - d2 u1`` at nodes, shape ``(N_r+1, N_th)``."""
    g = u.grid
    gam = (circulation_matrix(g) @ u.flat).reshape(g.N_r + 1, g.N_th)
    return gam / g.node_area[:, None]


def covariant_derivative(u: OneFormField, euclidean: bool = False) -> TensorField:
    """Components of ``nabla u`` in the polar orthonormal frame.

    With ``euclidean=True`` the Christoffel corrections are dropped.
    """
    g = u.grid
    m = frame_matrices(g)
    x = u.flat
    pre = "euclid_" if euclidean else ""
    c = lambda k: (m[pre + k] @ x).reshape(g.N_r, g.N_th)
    n = lambda k: (m[pre + k] @ x).reshape(g.N_r + 1, g.N_th)
    return TensorField(g, c("rr"), c("tt"), n("rt"), n("tr"), u.bc)


def deformation(u: OneFormField) -> TensorField:
    cov = covariant_derivative(u)
    off = 0.5 * (cov.rt + cov.tr)
    return TensorField(u.grid, cov.rr, cov.tt, off, off.copy(), u.bc)


def tensor_inner(s: TensorField, t: TensorField) -> float:
    """``int g(S, T) Vol`` for frame tensors."""
    g = s.grid
    wc = (g.pw_c * g.cell_area)[:, None]
    wn = (g.pw_f * g.node_area)[:, None]
    return float(np.sum(wc * (s.rr * t.rr + s.tt * t.tt))
                 + np.sum(wn * (s.rt * t.rt + s.tr * t.tr)))


# ---------------------------------------------------------------------------
# inner products and norms

def l2_inner(u: OneFormField, v: OneFormField) -> float:
    """``int g(u, v) Vol``, evaluated as the Euclidean face sum of ``u . v``."""
    _check(u, v)
    return float(np.dot(face_mass(u.grid), u.flat * v.flat))


def l2_inner_hyperbolic(u: OneFormField, v: OneFormField) -> float:
    """Same integral through the pairing weight and the volume weight."""
    _check(u, v)
    g = u.grid
    pw_r, pw_t = g.pw_f[:, None], g.pw_c[:, None]
    vw_r, vw_t = 1.0 / pw_r, 1.0 / pw_t
    wr = g.face_r_weight[:, None]
    wt = g.face_t_weight[:, None]
    return float(np.sum((pw_r * u.ur * v.ur) * vw_r * wr)
                 + np.sum((pw_t * u.ut * v.ut) * vw_t * wt))


def curl_inner(u: OneFormField, v: OneFormField) -> float:
    """``int g(du, dv) Vol``."""
    _check(u, v)
    g = u.grid
    C = circulation_matrix(g)
    wn = np.repeat(g.pw_f / g.node_area, g.N_th)
    return float(np.dot(C @ u.flat, wn * (C @ v.flat)))


def _require_zero_boundary(u):
    if u.bc != BC_BOTH:
        g = u.grid
        tol = 0.0
        if (np.any(u.ur[0] != tol) or np.any(u.ur[-1] != tol)
                or np.any(u.wall != tol)):
            raise CalculusError("energy inner product needs zero-boundary fields")


def h10_inner(u: OneFormField, v: OneFormField, strict: bool = True) -> float:
    """The energy product ``((u, v)) = int g(du, dv) + 2 a^2 int g(u, v)``."""
    _check(u, v)
    if strict:
        _require_zero_boundary(u)
        _require_zero_boundary(v)
    a2 = u.grid.a ** 2
    return curl_inner(u, v) + 2.0 * a2 * l2_inner(u, v)


def h1_seminorm_sq(u: OneFormField) -> float:
    """``int g(nabla u, nabla u) Vol``."""
    cov = covariant_derivative(u)
    return tensor_inner(cov, cov)


def deformation_energy(u: OneFormField) -> float:
    """``2 int g(Def u, Def u) Vol``."""
    d = deformation(u)
    return 2.0 * tensor_inner(d, d)


def l4_norm(u: OneFormField) -> float:
    """``(int g(u, u)^2 Vol)^(1/4)`` with center interpolation."""
    g = u.grid
    u1, u2 = u.cartesian_at_centers()
    dens = g.pw_c[:, None] * (u1 * u1 + u2 * u2) ** 2
    return float(np.sum(dens * g.cell_area[:, None])) ** 0.25


def norms(u: OneFormField) -> dict:
    l2 = l2_inner(u, u) ** 0.5
    grad = h1_seminorm_sq(u) ** 0.5
    return {"L2": l2, "L4": l4_norm(u), "H1": grad, "H1_full": (l2 * l2 + grad * grad) ** 0.5}


# ---------------------------------------------------------------------------
# convection form

def _frame_values(g, x):
    m = frame_matrices(g)
    return {k: m[k] @ x for k in ("ur_c", "ut_c", "ur_n", "ut_n")}


def _cov_values(g, x):
    m = frame_matrices(g)
    return {k: m[k] @ x for k in ("rr", "tt", "rt", "tr")}


def convection_dual(th, v, skew: bool = True):
    """Dual vector of ``phi -> b(th, v, phi)`` over the full flat state."""
    g = th.grid
    m = frame_matrices(g)
    wc, wn = _center_weight(g), _node_weight(g)
    T = _frame_values(g, th.flat)
    V = _frame_values(g, v.flat)
    DV = _cov_values(g, v.flat)
    first = (m["ur_c"].T @ (wc * T["ur_c"] * DV["rr"])
             + m["ut_c"].T @ (wc * T["ut_c"] * DV["tt"])
             + m["ut_n"].T @ (wn * T["ur_n"] * DV["rt"])
             + m["ur_n"].T @ (wn * T["ut_n"] * DV["tr"]))
    if not skew:
        return first
    second = (m["rr"].T @ (wc * T["ur_c"] * V["ur_c"])
              + m["tt"].T @ (wc * T["ut_c"] * V["ut_c"])
              + m["rt"].T @ (wn * T["ur_n"] * V["ut_n"])
              + m["tr"].T @ (wn * T["ut_n"] * V["ur_n"]))
    return 0.5 * (first - second)


def convection_dual_first(v, ph, skew: bool = True):
    """Dual vector of ``th -> b(th, v, ph)`` over the full flat state."""
    g = v.grid
    m = frame_matrices(g)
    wc, wn = _center_weight(g), _node_weight(g)

    def part(vx, px):
        P = _frame_values(g, px)
        DV = _cov_values(g, vx)
        return (m["ur_c"].T @ (wc * DV["rr"] * P["ur_c"])
                + m["ut_c"].T @ (wc * DV["tt"] * P["ut_c"])
                + m["ur_n"].T @ (wn * DV["rt"] * P["ut_n"])
                + m["ut_n"].T @ (wn * DV["tr"] * P["ur_n"]))

    first = part(v.flat, ph.flat)
    if not skew:
        return first
    return 0.5 * (first - part(ph.flat, v.flat))


def _directional(g, tx, vx, px):
    wc, wn = _center_weight(g), _node_weight(g)
    T = _frame_values(g, tx)
    P = _frame_values(g, px)
    DV = _cov_values(g, vx)
    return float(np.dot(wc, T["ur_c"] * DV["rr"] * P["ur_c"] + T["ut_c"] * DV["tt"] * P["ut_c"])
                 + np.dot(wn, T["ur_n"] * DV["rt"] * P["ut_n"] + T["ut_n"] * DV["tr"] * P["ur_n"]))


def trilinear(th: OneFormField, v: OneFormField, ph: OneFormField, skew: bool = True) -> float:
    """``b(th, v, ph) = int g(nabla_th v, ph) Vol``.

    The default skew form ``(b(th,v,ph) - b(th,ph,v)) / 2`` makes
    ``b(th, v, v) = 0`` hold exactly.
    """
    _check(th, v)
    _check(th, ph)
    g = th.grid
    first = _directional(g, th.flat, v.flat, ph.flat)
    if not skew:
        return first
    return 0.5 * (first - _directional(g, th.flat, ph.flat, v.flat))


def stream_field(grid: AnnulusGrid, psi) -> OneFormField:
    """Discretely divergence-free 1-form from node values of a stream function.

    ``psi`` has shape ``(N_r + 1, N_th)``; its wall rows are forced to zero so
    the result has zero normal component on both walls.
    """
    g = grid
    psi = np.array(psi, dtype=float)
    psi[0] = 0.0
    psi[-1] = 0.0
    ur = (np.roll(psi, -1, axis=1) - psi) / (g.r_f[:, None] * g.dth)
    ut = -(psi[1:] - psi[:-1]) / g.dr[:, None]
    return OneFormField(g, ur, ut, None, BC_BOTH)
