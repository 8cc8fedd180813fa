"""Linear Stokes step: forcing, saddle-point solve, assembly and residuals.

Weak form on zero-boundary test fields ``phi``::

    ((w~, phi)) - <P, B phi> = <T, phi>,     B w~ = 0

where ``B`` is the flux divergence (so ``-sum P (B phi)`` is the discrete
``int g(dP, phi) Vol``) and ``((., .))`` the energy product.  The pressure
is the Lagrange multiplier of the constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .calculus import (convection_dual, energy_matrix, energy_matrix_full,
                       flux_div_matrix, h1_seminorm_sq)
from .divsolve import pressure_block, velocity_blocks
from .mesh import AnnulusGrid, GridError, OneFormField, ScalarField, BC_BOTH, BC_FREE
from .modal import ModalSolver, SolverError

RESIDUAL_TOL = 1e-8


@dataclass
class WeakFunctional:
    """Action of a linear functional on the zero-boundary unknowns."""

    grid: AnnulusGrid
    values: np.ndarray
    label: str = "T"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.dof_index().size,):
            raise GridError("functional does not match the grid unknowns")

    def action(self, phi: OneFormField) -> float:
        if not phi.grid.same_as(self.grid):
            raise GridError("test field lives on a different grid")
        return float(np.dot(self.values, phi.dofs))

    def dual_norm(self, divergence_free: bool = True) -> float:
        return dual_norm(self.grid, self.values, divergence_free)

    def __add__(self, other):
        return WeakFunctional(self.grid, self.values + other.values, self.label)

    def scaled(self, s):
        return WeakFunctional(self.grid, s * self.values, self.label)


@dataclass
class StokesReport:
    residual: float
    T_dual: float
    divergence_max: float
    refinement_trace: list = field(default_factory=list)


@dataclass
class StokesSolution:
    u: OneFormField
    w_tilde: OneFormField
    P: ScalarField
    p: Optional[ScalarField] = None
    reports: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# cached factorizations

class StokesSystem:
    """Energy matrix, divergence and the two modal factorizations on a grid."""

    def __init__(self, grid: AnnulusGrid):
        g = grid
        self.g = g
        self.A = energy_matrix(g)
        self.B = flux_div_matrix(g)[:, g.dof_index()].tocsr()
        self.area = np.repeat(g.cell_area, g.N_th)
        self._Ainv = None
        self._kkt = None
        self._nn = None

    @property
    def nv(self):
        return self.A.shape[0]

    @property
    def Ainv(self):
        if self._Ainv is None:
            self._Ainv = ModalSolver(self.A, velocity_blocks(self.g), self.g.N_th)
        return self._Ainv

    @property
    def kkt(self):
        if self._kkt is None:
            g = self.g
            M = sp.bmat([[self.A, -self.B.T], [-self.B, None]], format="csr")
            border = np.concatenate([np.zeros(self.nv), self.area])
            self._kkt = ModalSolver(M, velocity_blocks(g) + [pressure_block(g)],
                                    g.N_th, border=border)
        return self._kkt

    @property
    def normal(self):
        """Factorization of ``B B^T`` with the zero-mean border (pressure recovery)."""
        if self._nn is None:
            g = self.g
            self._nn = ModalSolver((self.B @ self.B.T).tocsr(), [pressure_block(g)],
                                   g.N_th, border=self.area)
        return self._nn

    def apply(self, x):
        v, q = x[: self.nv], x[self.nv:]
        return np.concatenate([self.A @ v - self.B.T @ q, -(self.B @ v)])

    def solve(self, rhs_v, rhs_q=None, refine_steps: int = 2):
        """Solve the saddle point system with iterative refinement.

        Returns ``(v, q, trace)`` where ``trace`` lists relative residuals.
        """
        rhs_q = np.zeros(self.B.shape[0]) if rhs_q is None else rhs_q
        rhs = np.concatenate([rhs_v, rhs_q])
        scale = np.linalg.norm(rhs)
        if scale == 0:
            return np.zeros(self.nv), np.zeros(self.B.shape[0]), [0.0]
        x = self.kkt.solve(rhs)
        trace = []
        for _ in range(refine_steps + 1):
            r = rhs - self.apply(x)
            trace.append(float(np.linalg.norm(r) / scale))
            if not np.all(np.isfinite(x)):
                raise SolverError(f"saddle point solve broke down; residuals {trace}")
            if trace[-1] < 1e-15 or len(trace) > refine_steps:
                break
            x = x + self.kkt.solve(r)
        q = x[self.nv:]
        q = q - np.dot(self.area, q) / self.area.sum()
        return x[: self.nv], q, trace


def stokes_system(grid: AnnulusGrid) -> StokesSystem:
    key = "stokes_system"
    if key not in grid._cache:
        grid._cache[key] = StokesSystem(grid)
    return grid._cache[key]


def dual_norm(grid: AnnulusGrid, values, divergence_free: bool = True) -> float:
    """Dual norm of a functional with respect to the energy norm.

    With ``divergence_free`` the supremum runs over discretely
    divergence-free test fields only (one saddle point solve); otherwise over
    all zero-boundary fields (one energy solve).
    """
    values = np.asarray(values, dtype=float)
    if not np.any(values):
        return 0.0
    S = stokes_system(grid)
    if divergence_free:
        z, _, _ = S.solve(values, refine_steps=1)
    else:
        z = S.Ainv.solve(values)
    return float(np.sqrt(max(np.dot(z, S.A @ z), 0.0)))


# ---------------------------------------------------------------------------
# operations

def stokes_rhs(eta, dF: OneFormField, w: OneFormField, grid: AnnulusGrid) -> WeakFunctional:
    """``<T, phi> = -((eta dF + w, phi))`` on zero-boundary test fields."""
    for f in (eta, dF, w):
        if not f.grid.same_as(grid):
            raise GridError("ingredients live on different grids")
    X = eta.face_values() * dF.flat + w.flat
    vals = -(energy_matrix_full(grid) @ X)[grid.dof_index()]
    return WeakFunctional(grid, vals, "T")


def solve_stokes(grid: AnnulusGrid, T: WeakFunctional, refine_steps: int = 2):
    """Return ``(w_tilde, P, report)``.

    ``P`` is normalized to zero area mean over the grid.
    """
    if not T.grid.same_as(grid):
        raise GridError("forcing lives on a different grid")
    S = stokes_system(grid)
    v, q, trace = S.solve(T.values, refine_steps=refine_steps)
    w_tilde = OneFormField.from_flat(grid, v, BC_BOTH)
    P = ScalarField(grid, q.reshape(grid.N_r, grid.N_th))
    r = S.A @ v - S.B.T @ q - T.values
    Tn = T.dual_norm()
    res = dual_norm(grid, r, divergence_free=False)
    if Tn > 0 and res > RESIDUAL_TOL * Tn:
        raise SolverError(f"Stokes residual {res:.3e} exceeds tolerance; trace {trace}")
    div = np.abs(S.B @ v) / S.area
    report = StokesReport(residual=res / Tn if Tn > 0 else res, T_dual=Tn,
                          divergence_max=float(div.max()), refinement_trace=trace)
    return w_tilde, P, report


def assemble_solution(eta, dF: OneFormField, w: OneFormField, w_tilde: OneFormField) -> OneFormField:
    """``u = (eta - 1) dF + w + w_tilde``."""
    g = dF.grid
    for f in (eta, w, w_tilde):
        if not f.grid.same_as(g):
            raise GridError("ingredients live on different grids")
    x = (eta.face_values() - 1.0) * dF.flat + w.flat + w_tilde.flat
    u = OneFormField.from_flat(g, x, BC_FREE)
    # the cutoff equals one on the inner wall, so these rows vanish identically
    u.ur[0] = 0.0
    u.wall[0] = 0.0
    return u


def full_pressure(P: ScalarField, F: ScalarField) -> ScalarField:
    """``p = P + 2 a^2 F``, the pressure of ``u`` in the Stokes system."""
    g = P.grid
    return ScalarField(g, P.values + 2.0 * g.a ** 2 * F.values)


def residual_vector(u: OneFormField, p: ScalarField, kind: str = "stokes", skew: bool = True):
    g = u.grid
    idx = g.dof_index()
    r = (energy_matrix_full(g) @ u.flat)[idx] - flux_div_matrix(g)[:, idx].T @ p.values.ravel()
    if kind == "navier_stokes":
        r = r + convection_dual(u, u, skew=skew)[idx]
    elif kind != "stokes":
        raise ValueError(f"unknown residual kind {kind!r}")
    return r


def weak_residual(u: OneFormField, p: ScalarField, kind: str = "stokes",
                  forcing: Optional[WeakFunctional] = None) -> float:
    """Energy-dual norm of the momentum residual of ``(u, p)``."""
    r = residual_vector(u, p, kind)
    if forcing is not None:
        r = r - forcing.values
    return dual_norm(u.grid, r, divergence_free=False)


# ---------------------------------------------------------------------------
# local pressures and gluing

def restrict_functional(big: AnnulusGrid, values, n_cells: int) -> np.ndarray:
    """Restrict a functional on ``big`` to the inner sub-annulus of ``n_cells`` rows."""
    g = big
    full = np.zeros(g.n_full)
    full[g.dof_index()] = values
    ur = full[: g.n_ur].reshape(g.N_r + 1, g.N_th)
    ut = full[g.n_ur: g.n_ur + g.n_ut].reshape(g.N_r, g.N_th)
    return np.concatenate([ur[1:n_cells].ravel(), ut[:n_cells].ravel()])


def recover_local_pressure(sub: AnnulusGrid, L) -> ScalarField:
    """Least-squares ``P`` with ``B^T P = L`` on the zero-boundary unknowns of ``sub``.

    Zero area mean is imposed; the fit is exact when ``L`` is a pressure
    gradient functional.
    """
    S = stokes_system(sub)
    q = S.normal.solve(S.B @ np.asarray(L, dtype=float))
    q = q - np.dot(S.area, q) / S.area.sum()
    return ScalarField(sub, q.reshape(sub.N_r, sub.N_th))


def recover_local_pressures(big: AnnulusGrid, L, sizes: Sequence[int]):
    """Local pressures from one functional on nested inner sub-annuli."""
    out = []
    for n in sizes:
        sub = big.subgrid(0, n)
        out.append((sub, recover_local_pressure(sub, restrict_functional(big, L, n))))
    return out


@dataclass
class GlueReport:
    shifts: list
    overlap_gaps: list


def glue_pressure(locals_, tol: float = 1e-8):
    """Glue local pressures on nested annuli sharing the inner boundary.

    Each local is shifted by a constant so that it agrees with the innermost
    one (normalized to zero mean) on the innermost annulus.  Returns
    ``(P, report)`` with ``P`` on the largest annulus; raises if a shifted
    local still disagrees by more than ``tol`` in relative L2 on the overlap.
    """
    locs = sorted(locals_, key=lambda t: t[0].N_r)
    if not locs:
        raise ValueError("no local pressures to glue")
    g1, P1 = locs[0]
    n1 = g1.N_r
    area1 = g1.weights
    for g, _ in locs[1:]:
        if g.N_th != g1.N_th or not np.array_equal(g.rho_f[: n1 + 1], g1.rho_f):
            raise GridError("local annuli do not share the innermost faces")
    ref = P1.values - np.sum(P1.values * area1) / area1.sum()
    ref_norm = float(np.sqrt(np.sum(ref ** 2 * area1)))
    shifts, gaps, shifted = [], [], []
    for g, P in locs:
        c = np.sum((ref - P.values[:n1]) * area1) / area1.sum()
        v = P.values + c
        gap = float(np.sqrt(np.sum((v[:n1] - ref) ** 2 * area1)))
        rel = gap / ref_norm if ref_norm > 0 else gap
        shifts.append(float(c))
        gaps.append(rel)
        if rel > tol:
            raise SolverError(f"glued pressures disagree on the overlap: relative gap {rel:.3e}")
        shifted.append((g, v))
    gN = locs[-1][0]
    vals = np.empty((gN.N_r, gN.N_th))
    lo = 0
    for g, v in shifted:
        vals[lo: g.N_r] = v[lo: g.N_r]
        lo = g.N_r
    return ScalarField(gN, vals), GlueReport(shifts, gaps)
