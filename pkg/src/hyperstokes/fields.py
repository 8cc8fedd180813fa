"""Explicit ingredients: harmonic potentials, the radial cutoff and the
divergence data it produces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .calculus import ext_derivative, flux_div_matrix
from .hypgeom import DomainSpec, geodesic_to_disk
from .mesh import AnnulusGrid, OneFormField, ScalarField, GridError, integrate, BC_FREE


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class HarmonicSpec:
    """``F = c Re(exp(i phase) z^n)`` in the disk chart."""

    n: int = 1
    c: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise FieldError("harmonic mode n must be an integer >= 1 (n = 0 gives dF = 0)")
        if self.c == 0 or not math.isfinite(self.c):
            raise FieldError("harmonic amplitude c must be finite and nonzero")

    def full_disk_energy(self, r: float = 1.0) -> float:
        """``int_{|y|<r} |grad F|^2 dy = pi n c^2 r^(2n)``."""
        return math.pi * self.n * self.c ** 2 * r ** (2 * self.n)

    def dF_norm(self) -> float:
        """L2 norm of dF over the whole hyperbolic plane."""
        return math.sqrt(self.full_disk_energy(1.0))


@dataclass(frozen=True)
class CutoffSpec:
    a: float = 1.0
    R0: float = 1.0
    profile: str = "exponential"

    def __post_init__(self):
        if self.profile not in ("exponential", "quintic"):
            raise FieldError(f"unknown cutoff profile {self.profile!r}")
        DomainSpec(self.a, self.R0)

    @classmethod
    def from_domain(cls, spec: DomainSpec, profile="exponential"):
        return cls(spec.a, spec.R0, profile)


def _s(tau):
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    pos = tau > 0
    out[pos] = np.exp(-1.0 / tau[pos])
    return out


def bump(t, profile="exponential"):
    """The fixed profile: 1 on ``[0, 1]``, 0 on ``[2, inf)``, nonincreasing."""
    t = np.asarray(t, dtype=float)
    if profile == "exponential":
        A, B = _s(2.0 - t), _s(t - 1.0)
        return A / (A + B)
    x = np.clip(t - 1.0, 0.0, 1.0)
    return 1.0 - x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)


def bump_derivative(t, profile="exponential"):
    t = np.asarray(t, dtype=float)
    if profile == "exponential":
        out = np.zeros_like(t)
        m = (t > 1.0) & (t < 2.0)
        tm = t[m]
        A, B = np.exp(-1.0 / (2.0 - tm)), np.exp(-1.0 / (tm - 1.0))
        dA = -A / (2.0 - tm) ** 2
        dB = B / (tm - 1.0) ** 2
        out[m] = (dA * B - A * dB) / (A + B) ** 2
        return out
    x = np.clip(t - 1.0, 0.0, 1.0)
    return -30.0 * x * x * (1.0 - x) ** 2


def _rho_of_om(a, om):
    # geodesic radius from 1 - r, stable near the rim
    return np.log((2.0 - om) / om) / a


@dataclass
class HarmonicField(ScalarField):
    spec: Optional[HarmonicSpec] = None


@dataclass
class CutoffField(ScalarField):
    cutoff: Optional[CutoffSpec] = None

    def at_rho(self, rho):
        c = self.cutoff
        return bump(np.asarray(rho) / (2.0 * c.R0), c.profile)

    def face_values(self):
        """Cutoff sampled on the flat 1-form layout (faces and walls)."""
        g = self.grid
        a = g.a
        ur = self.at_rho(g.rho_f)
        ut = self.at_rho(_rho_of_om(a, g.om_c))
        return np.concatenate([np.repeat(ur, g.N_th), np.repeat(ut, g.N_th),
                               np.repeat([ur[0], ur[-1]], g.N_th)])


def _radial_harmonic(grid: AnnulusGrid, n: int):
    """Radial profile of the discretely harmonic extension of ``r^n cos(n theta)``."""
    g = grid
    N = g.N_r
    lam = 2.0 - 2.0 * math.cos(n * g.dth)
    d = g.dual_width
    up = g.r_f[1:] * g.dth / d[1:]        # coupling to i+1
    lo = g.r_f[:-1] * g.dth / d[:-1]      # coupling to i-1
    diag = -(up + lo) - g.dr * lam / (g.r_c * g.dth)
    rhs = np.zeros(N)
    f_in, f_out = g.r_f[0] ** n, g.r_f[-1] ** n
    rhs[0] -= lo[0] * f_in
    rhs[-1] -= up[-1] * f_out
    ab = np.zeros((3, N))
    ab[0, 1:] = up[:-1]
    ab[1] = diag
    ab[2, :-1] = lo[1:]
    return solve_banded((1, 1), ab, rhs), f_in, f_out


def harmonic_pair(spec: HarmonicSpec, grid: AnnulusGrid, mode: str = "discrete"):
    """Potential ``F`` and its differential ``dF`` on the grid.

    ``mode="analytic"`` samples the exact derivatives at face midpoints.
    ``mode="discrete"`` (default) takes the discretely harmonic potential with
    the exact wall values and its discrete gradient; then ``dF`` is closed and
    co-closed to rounding, which keeps the downstream identities exact.
    """
    g = grid
    n, c, ph = spec.n, spec.c, spec.phase
    ang_c = n * g.theta_c + ph
    ang_f = n * g.theta_f + ph
    wall = c * np.stack([g.r_f[0] ** n * np.cos(ang_c), g.r_f[-1] ** n * np.cos(ang_c)])
    if mode == "analytic":
        F = c * (g.r_c[:, None] ** n) * np.cos(ang_c)[None, :]
        Ff = HarmonicField(g, F, wall, BC_FREE, spec)
        ur = c * n * g.r_f[:, None] ** (n - 1) * np.cos(ang_c)[None, :]
        ut = -c * n * g.r_c[:, None] ** (n - 1) * np.sin(ang_f)[None, :]
        wt = -c * n * np.stack([g.r_f[0] ** (n - 1) * np.sin(ang_f),
                                g.r_f[-1] ** (n - 1) * np.sin(ang_f)])
        return Ff, OneFormField(g, ur, ut, wt, BC_FREE)
    if mode != "discrete":
        raise FieldError(f"unknown sampling mode {mode!r}")
    prof, _, _ = _radial_harmonic(g, n)
    F = c * prof[:, None] * np.cos(ang_c)[None, :]
    Ff = HarmonicField(g, F, wall, BC_FREE, spec)
    return Ff, ext_derivative(Ff)


def cutoff(spec: CutoffSpec, grid: AnnulusGrid):
    """Cutoff ``eta(rho / 2R0)`` at centers and its analytic differential."""
    g = grid
    if g.R_out < 4.0 * spec.R0 * (1 - 1e-12):
        raise FieldError(
            f"grid reaches geodesic radius {g.R_out:g} < 4 R0 = {4 * spec.R0:g}; "
            "the cutoff support is not contained in the grid")
    if abs(g.a - spec.a) > 0:
        raise FieldError("cutoff curvature differs from the grid chart")
    rho_c = _rho_of_om(g.a, g.om_c)
    vals = bump(rho_c / (2 * spec.R0), spec.profile)
    eta = CutoffField(g, np.repeat(vals[:, None], g.N_th, axis=1),
                      np.repeat(bump(g.rho_f[[0, -1]] / (2 * spec.R0), spec.profile)[:, None],
                                g.N_th, axis=1), BC_FREE, spec)
    # d eta = eta'(t) / (2 R0) * (2 / (a (1 - r^2))) dr
    drho_dr = 2.0 / (g.a * g.om_f * (2.0 - g.om_f))
    dur = bump_derivative(g.rho_f / (2 * spec.R0), spec.profile) / (2 * spec.R0) * drho_dr
    deta = OneFormField(g, np.repeat(dur[:, None], g.N_th, axis=1),
                        np.zeros((g.N_r, g.N_th)), None, BC_FREE)
    return eta, deta


def band_cell_range(grid: AnnulusGrid, R0: float):
    """Radial cell indices ``[i0, i1)`` of the transition band ``[2R0, 4R0]``."""
    i0, i1 = grid.band_cells(2 * R0, 4 * R0)
    tol = 1e-12 * 4 * R0
    if (i1 <= i0 or abs(grid.rho_f[i0] - 2 * R0) > tol or abs(grid.rho_f[i1] - 4 * R0) > tol):
        raise GridError("grid faces are not aligned with the band [2R0, 4R0]")
    return i0, i1


def divergence_rhs(eta: CutoffField, F: ScalarField, grid: AnnulusGrid,
                   pointwise: bool = False) -> ScalarField:
    """Euclidean divergence data ``h = -grad(eta) . grad(F)`` on the band.

    The default evaluates ``h = -div(eta dF)`` with the discrete operators,
    which equals the pointwise product up to O(h^2) and makes
    ``(eta - 1) dF + w`` exactly divergence free once ``div w = h``.
    """
    if not (eta.grid.same_as(grid) and F.grid.same_as(grid)):
        raise GridError("fields live on different grids")
    g = grid
    R0 = eta.cutoff.R0
    i0, i1 = band_cell_range(g, R0)
    if pointwise:
        if not isinstance(F, HarmonicField) or F.spec is None:
            raise FieldError("pointwise evaluation needs the analytic potential")
        s = F.spec
        rho_c = _rho_of_om(g.a, g.om_c)
        deta_dr = (bump_derivative(rho_c / (2 * R0), eta.cutoff.profile) / (2 * R0)
                   * 2.0 / (g.a * g.om_c * (2.0 - g.om_c)))
        dF_dr = s.c * s.n * g.r_c[:, None] ** (s.n - 1) * np.cos(s.n * g.theta_c + s.phase)[None, :]
        h = -deta_dr[:, None] * dF_dr
    else:
        dF = ext_derivative(F)
        flux = flux_div_matrix(g) @ (eta.face_values() * dF.flat)
        h = -(flux.reshape(g.N_r, g.N_th) / g.cell_area[:, None])
    out = np.zeros((g.N_r, g.N_th))
    out[i0:i1] = h[i0:i1]
    return ScalarField(g, out)


def compatibility(h: ScalarField, grid: AnnulusGrid) -> float:
    """Euclidean integral of ``h`` (vanishes for data built from harmonic F)."""
    return integrate(grid, h, "euclidean")


def l1_norm(h: ScalarField, grid: AnnulusGrid) -> float:
    return integrate(grid, np.abs(h.values), "euclidean")
