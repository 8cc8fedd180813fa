"""Minimal-energy right inverse of the divergence on an annular ring.

Among all zero-boundary fields ``w`` on the ring with ``div w = h`` we pick
the minimizer of the Euclidean Dirichlet energy.  The saddle-point system

    K w + B^T lam = 0,     B w = area * h

is reduced to the Schur complement ``S = B K^{-1} B^T`` and solved by
preconditioned conjugate gradients; ``K^{-1}`` is applied through the
Fourier-block factorization.  A direct factorization of the whole saddle
point system is available as an independent route.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calculus import euclidean_dirichlet_matrix, flux_div_matrix
from .fields import band_cell_range
from .mesh import AnnulusGrid, OneFormField, ScalarField, GridError, BC_BOTH
from .modal import Block, ModalSolver, SolverError

import scipy.sparse as sp

COMPAT_TOL = 1e-10


class CompatibilityError(ValueError):
    """The data violate the zero-mean condition needed for solvability."""


@dataclass
class DivergenceSolveReport:
    residual_l2: float
    grad_norm: float
    bogovskii_ratio: float
    iterations: int
    residual_trace: list = field(default_factory=list)
    method: str = "schur_cg"


def velocity_blocks(g: AnnulusGrid):
    return [Block(g.N_r - 1, 0.5 * g.dth), Block(g.N_r, 0.0)]


def pressure_block(g: AnnulusGrid):
    return Block(g.N_r, 0.5 * g.dth)


class _RingSystem:
    def __init__(self, ring: AnnulusGrid):
        self.g = ring
        self.K = euclidean_dirichlet_matrix(ring)
        self.B = flux_div_matrix(ring)[:, ring.dof_index()].tocsr()
        self._Kinv = None
        self._kkt = None

    @property
    def Kinv(self):
        if self._Kinv is None:
            self._Kinv = ModalSolver(self.K, velocity_blocks(self.g), self.g.N_th)
        return self._Kinv

    @property
    def kkt(self):
        if self._kkt is None:
            g = self.g
            M = sp.bmat([[self.K, self.B.T], [self.B, None]], format="csr")
            border = np.concatenate([np.zeros(self.K.shape[0]),
                                     np.repeat(g.cell_area, g.N_th)])
            self._kkt = ModalSolver(M, velocity_blocks(g) + [pressure_block(g)],
                                    g.N_th, border=border)
        return self._kkt


def _ring_system(ring):
    key = "ring_system"
    if key not in ring._cache:
        ring._cache[key] = _RingSystem(ring)
    return ring._cache[key]


def _project_mean(x, area):
    return x - np.dot(area, x) / area.sum()


def schur_cg(system: _RingSystem, f, lam0=None, tol=1e-10, maxiter=2000):
    """Solve ``S lam = -f`` by preconditioned CG on mean-zero multipliers."""
    g = system.g
    area = np.repeat(g.cell_area, g.N_th)
    B, Kinv = system.B, system.Kinv

    def S(x):
        return B @ Kinv.solve(B.T @ x)

    b = -np.asarray(f, dtype=float)
    lam = np.zeros_like(b) if lam0 is None else _project_mean(np.asarray(lam0, float), area)
    r = b - S(lam)
    bnorm = np.linalg.norm(b / np.sqrt(area))
    trace = []
    if bnorm == 0:
        return np.zeros_like(b), 0, [0.0]
    z = _project_mean(r / area, area)
    p = z.copy()
    rz = np.dot(r, z)
    for it in range(1, maxiter + 1):
        Sp = S(p)
        alpha = rz / np.dot(p, Sp)
        lam += alpha * p
        r -= alpha * Sp
        res = np.linalg.norm(r / np.sqrt(area)) / bnorm
        trace.append(float(res))
        if res <= tol:
            return _project_mean(lam, area), it, trace
        z = _project_mean(r / area, area)
        rz_new = np.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"Schur-complement CG did not converge: last residuals {trace[-5:]}")


def solve_divergence(grid: AnnulusGrid, h: ScalarField, R0: Optional[float] = None,
                     ring: Optional[tuple] = None, method: str = "schur_cg",
                     lam0=None, tol: float = 1e-10, maxiter: int = 2000):
    """Return ``(w, report)`` with ``div w = h`` on the ring, ``w = 0`` elsewhere.

    The ring is the transition band ``[2 R0, 4 R0]`` when ``R0`` is given,
    the explicit radial cell range ``ring`` otherwise, or the whole grid.
    """
    if not h.grid.same_as(grid):
        raise GridError("divergence data live on a different grid")
    g = grid
    if ring is None:
        ring = band_cell_range(g, R0) if R0 is not None else (0, g.N_r)
    i0, i1 = ring
    vals = h.values
    outside = np.concatenate([vals[:i0].ravel(), vals[i1:].ravel()])
    if outside.size and np.any(outside != 0):
        raise ValueError("divergence data must vanish outside the ring")
    sub = g.subgrid(i0, i1)
    hr = vals[i0:i1].ravel()
    area = np.repeat(sub.cell_area, sub.N_th)
    f = area * hr
    l1 = float(np.sum(np.abs(f)))
    total = float(np.sum(f))
    if l1 > 0 and abs(total) > COMPAT_TOL * l1:
        raise CompatibilityError(
            f"data integrate to {total:.3e} (relative {abs(total) / l1:.3e}); "
            "the zero-mean compatibility condition fails")
    system = _ring_system(sub)
    if l1 == 0:
        w_dofs, its, trace = np.zeros(system.K.shape[0]), 0, [0.0]
    elif method == "schur_cg":
        lam, its, trace = schur_cg(system, f, lam0=lam0, tol=tol, maxiter=maxiter)
        w_dofs = -system.Kinv.solve(system.B.T @ lam)
    elif method == "direct":
        rhs = np.concatenate([np.zeros(system.K.shape[0]), f])
        sol = system.kkt.solve(rhs)
        w_dofs, its, trace = sol[: system.K.shape[0]], 1, []
    else:
        raise ValueError(f"unknown method {method!r}")

    wr = OneFormField.from_flat(sub, w_dofs)
    ur = np.zeros((g.N_r + 1, g.N_th))
    ut = np.zeros((g.N_r, g.N_th))
    ur[i0: i1 + 1] = wr.ur
    ut[i0: i1] = wr.ut
    w = OneFormField(g, ur, ut, None, BC_BOTH)

    div = (flux_div_matrix(g) @ w.flat).reshape(g.N_r, g.N_th) / g.cell_area[:, None]
    wts = g.cell_area[:, None]
    hn = float(np.sqrt(np.sum(vals ** 2 * wts)))
    res = float(np.sqrt(np.sum((div - vals) ** 2 * wts)))
    grad = float(np.sqrt(w_dofs @ (system.K @ w_dofs)))
    report = DivergenceSolveReport(
        residual_l2=res / hn if hn > 0 else res,
        grad_norm=grad,
        bogovskii_ratio=grad / hn if hn > 0 else 0.0,
        iterations=int(its), residual_trace=trace, method=method)
    return w, report
