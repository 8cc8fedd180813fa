"""Small-data steady Navier-Stokes on truncated exterior domains.

With ``Psi = (eta - 1) dF + w`` the velocity ``u = Psi + w_R`` solves the
Navier-Stokes system iff, for all divergence-free zero-boundary ``phi``,

    ((w_R, phi)) + b(w_R, Psi, phi) + b(Psi, w_R, phi) + b(w_R, w_R, phi) = <Phi, phi>

with ``<Phi, phi> = -((Psi, phi)) - b(Psi, Psi, phi)``.  The nonlinear
problem is solved by damped Picard iteration along a homotopy in the data
scale ``lam``; every linear step is one saddle-point solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .calculus import (convection_dual, convection_dual_first, covariant_derivative,
                       energy_matrix_full, face_mass, h1_matrix, h1_seminorm_sq,
                       l2_inner, l4_norm, norms, tensor_inner, trilinear)
from .divsolve import solve_divergence, velocity_blocks
from .fields import CutoffSpec, HarmonicSpec, cutoff, divergence_rhs, harmonic_pair
from .hypgeom import DomainSpec
from .mesh import (AnnulusGrid, GridError, OneFormField, ScalarField,
                   build_annulus_grid, BC_BOTH, BC_FREE)
from .modal import ModalSolver, SolverError
from .probes import probe_set
from .stokes import (WeakFunctional, dual_norm, glue_pressure, recover_local_pressures,
                     stokes_system)

SAFETY = 2.0


class SmallnessError(ValueError):
    """The data violate the smallness condition on ``||dF||``."""


@dataclass
class ConstantsReport:
    C_poincare: float
    C_ladyzhenskaya: float
    C_harmonic: dict
    C_linear: float
    C_quadratic: float
    C_convective: float
    C_aR0: float
    dF_threshold: float


@dataclass(frozen=True)
class ExhaustionSchedule:
    """Outer geodesic radii and a fixed grid density shared by all stages."""

    R: tuple
    density: int = 8
    N_th: int = 64

    def __post_init__(self):
        R = tuple(float(x) for x in self.R)
        object.__setattr__(self, "R", R)
        if not R:
            raise ValueError("schedule needs at least one radius")
        if any(b <= a for a, b in zip(R, R[1:])):
            raise ValueError("schedule radii must be strictly increasing")

    def validate(self, spec: DomainSpec):
        if self.R[0] <= 5 * spec.R0:
            raise ValueError(f"first radius {self.R[0]:g} must exceed 5 R0 = {5 * spec.R0:g}")

    def grid(self, spec: DomainSpec, R_out: float) -> AnnulusGrid:
        N_r = int(round(self.density * (R_out - spec.R0)))
        return build_annulus_grid(spec, spec.R0, R_out, N_r, self.N_th)


@dataclass(frozen=True)
class SolverOptions:
    lambda_schedule: tuple = (0.25, 0.5, 0.75, 1.0)
    picard_tol: float = 1e-10
    picard_max_iters: int = 50
    damping: float = 1.0
    skew: bool = True
    allow_large_data: bool = False

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambda_schedule)
        object.__setattr__(self, "lambda_schedule", lam)
        if not lam or any(not (0 < x <= 1) for x in lam):
            raise ValueError("lambda values must lie in (0, 1]")
        if any(b <= a for a, b in zip(lam, lam[1:])) or lam[-1] != 1.0:
            raise ValueError("lambda schedule must increase and end at 1")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class PicardTrace:
    increments: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    contraction: dict = field(default_factory=dict)

    @property
    def total_iterations(self):
        return int(sum(self.iterations.values()))


@dataclass
class EnergyReport:
    residual: float
    energy: float
    energy_covariant: float
    forcing: float
    convective: float
    b_psi_w_w: float
    b_w_w_w: float


@dataclass
class AprioriReport:
    lhs: float
    lhs_energy: float
    rhs: float
    satisfied: bool


# ---------------------------------------------------------------------------
# ingredients

def assemble_psi_phi(eta, dF: OneFormField, w: OneFormField, grid: AnnulusGrid, skew: bool = True):
    """``Psi = (eta - 1) dF + w`` and the functional ``Phi``."""
    for f in (eta, dF, w):
        if not f.grid.same_as(grid):
            raise GridError("ingredients live on different grids")
    x = (eta.face_values() - 1.0) * dF.flat + w.flat
    Psi = OneFormField.from_flat(grid, x, BC_FREE)
    Psi.ur[0] = 0.0
    Psi.wall[0] = 0.0
    idx = grid.dof_index()
    vals = -(energy_matrix_full(grid) @ Psi.flat)[idx] - convection_dual(Psi, Psi, skew)[idx]
    return Psi, WeakFunctional(grid, vals, "Phi")


def ingredients(spec: DomainSpec, harmonic: HarmonicSpec, grid: AnnulusGrid,
                profile: str = "exponential"):
    """``(F, dF, eta, w)`` for the given data on ``grid``."""
    F, dF = harmonic_pair(harmonic, grid)
    eta, _ = cutoff(CutoffSpec.from_domain(spec, profile), grid)
    h = divergence_rhs(eta, F, grid)
    w, _ = solve_divergence(grid, h, R0=spec.R0)
    return F, dF, eta, w


def unit_psi(spec: DomainSpec, harmonic: HarmonicSpec, grid: AnnulusGrid):
    """``Psi`` for unit amplitude divided by the plane norm of ``dF``."""
    unit = HarmonicSpec(harmonic.n, 1.0, harmonic.phase)
    _, dF, eta, w = ingredients(spec, unit, grid)
    Psi, _ = assemble_psi_phi(eta, dF, w, grid)
    return Psi.scaled(1.0 / unit.dF_norm())


# ---------------------------------------------------------------------------
# constants

def _power_max(apply, x0, iters=40, rtol=1e-6):
    """Largest generalized Rayleigh quotient by power iteration."""
    x = x0
    val = 0.0
    for _ in range(iters):
        y = apply(x)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0, x
        new = nrm / np.linalg.norm(x)
        x = y / nrm
        if abs(new - val) <= rtol * new:
            val = new
            break
        val = new
    return val, x


def poincare_constant(grid: AnnulusGrid, probes, iters=40):
    """``sup a ||phi|| / ||nabla phi||`` over probes and a power iteration."""
    a = grid.a
    idx = grid.dof_index()
    M = face_mass(grid)[idx]
    K = h1_matrix(grid)
    best = 0.0
    for p in probes:
        x = p.dofs
        best = max(best, a * math.sqrt(np.dot(x, M * x) / np.dot(x, K @ x)))
    Kinv = ModalSolver(K, velocity_blocks(grid), grid.N_th)
    x0 = probes[0].dofs if probes else np.ones(idx.size)
    # inverse iteration for the largest eigenvalue of K^{-1} a^2 M
    x = x0.copy()
    for _ in range(iters):
        y = Kinv.solve(a * a * M * x)
        ray = np.dot(y, K @ y)
        x = y / math.sqrt(ray)
    q = a * math.sqrt(np.dot(x, M * x) / np.dot(x, K @ x))
    return max(best, q)


def ladyzhenskaya_constant(probes):
    """``sup ||phi||_4^2 / (||phi||_2 ||nabla phi||_2)`` over probes."""
    best = 0.0
    for p in probes:
        l2 = math.sqrt(l2_inner(p, p))
        gr = math.sqrt(h1_seminorm_sq(p))
        if l2 > 0 and gr > 0:
            best = max(best, l4_norm(p) ** 2 / (l2 * gr))
    return best


def harmonic_constants(grid: AnnulusGrid, modes=(1, 2, 3, 4)):
    """``||nabla dF|| / ||dF||`` on the grid for each mode."""
    out = {}
    for n in modes:
        _, dF = harmonic_pair(HarmonicSpec(n, 1.0), grid)
        cov = covariant_derivative(dF)
        out[int(n)] = math.sqrt(tensor_inner(cov, cov) / l2_inner(dF, dF))
    return out


def convective_constant(Psi_hat: OneFormField, probes, iters=40, skew=True):
    """``sup |b(w, Psi_hat, w)| / ((w, w))`` over divergence-free fields."""
    g = Psi_hat.grid
    S = stokes_system(g)
    idx = g.dof_index()

    def form(x):
        f = OneFormField.from_flat(g, x, BC_BOTH)
        return trilinear(f, Psi_hat, f, skew)

    best = 0.0
    for p in probes:
        x = p.dofs
        best = max(best, abs(form(x)) / np.dot(x, S.A @ x))

    def apply(x):
        f = OneFormField.from_flat(g, x, BC_BOTH)
        grad = (convection_dual(f, Psi_hat, skew) + convection_dual_first(Psi_hat, f, skew))[idx]
        z, _, _ = S.solve(0.5 * grad, refine_steps=0)
        return z

    if probes:
        start = sum(p.dofs for p in probes[:5])
        _, x = _power_max(apply, start, iters)
        best = max(best, abs(form(x)) / np.dot(x, S.A @ x))
    return best


def estimate_constants(grid: AnnulusGrid, samples: int = 100, seed: int = 0,
                       spec: Optional[DomainSpec] = None,
                       harmonic: Optional[HarmonicSpec] = None,
                       Psi_hat: Optional[OneFormField] = None) -> ConstantsReport:
    """Empirical constants of the a priori chain and the smallness threshold.

    ``C_aR0`` is ``SAFETY`` times the largest of the three constants bounding
    ``||Phi||`` and the convective term for unit ``||dF||``.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    harmonic = harmonic or HarmonicSpec()
    if Psi_hat is None:
        if spec is None:
            raise ValueError("need the domain spec or a normalized Psi")
        Psi_hat = unit_psi(spec, harmonic, grid)
    probes = probe_set(grid, samples, seed)
    dprobes = probe_set(grid, max(samples // 5, 1), seed + 1, divergence_free=True)
    C_p = poincare_constant(grid, probes)
    C_l = ladyzhenskaya_constant(probes)
    C_h = harmonic_constants(grid)
    idx = grid.dof_index()
    lin = -(energy_matrix_full(grid) @ Psi_hat.flat)[idx]
    quad = convection_dual(Psi_hat, Psi_hat)[idx]
    C_lin = dual_norm(grid, lin)
    C_quad = dual_norm(grid, quad)
    C_90 = convective_constant(Psi_hat, dprobes)
    C = SAFETY * max(C_lin, C_quad, C_90)
    return ConstantsReport(C_p, C_l, C_h, C_lin, C_quad, C_90, C, 1.0 / (2.0 * C))


# ---------------------------------------------------------------------------
# Picard iteration

def _field(g, x):
    return OneFormField.from_flat(g, x, BC_BOTH)


def solve_ns_annulus(grid: AnnulusGrid, Psi: OneFormField, Phi: WeakFunctional,
                     opts: SolverOptions = SolverOptions(),
                     dF_norm: Optional[float] = None,
                     constants: Optional[ConstantsReport] = None,
                     theta0=None):
    """Return ``(w_R, P, trace)`` at ``lam = 1``."""
    if dF_norm is not None and constants is not None and not opts.allow_large_data:
        if dF_norm >= constants.dF_threshold:
            raise SmallnessError(
                f"||dF|| = {dF_norm:.4g} is not below the smallness threshold "
                f"{constants.dF_threshold:.4g}; set allow_large_data (CLI: --unsafe-allow-large-data) to override")
    g = grid
    S = stokes_system(g)
    idx = g.dof_index()
    skew = opts.skew
    phi = Phi.values
    th = np.zeros(idx.size) if theta0 is None else np.array(theta0, dtype=float)
    trace = PicardTrace()
    q = np.zeros(S.B.shape[0])

    def enorm(x):
        return math.sqrt(max(np.dot(x, S.A @ x), 0.0))

    if not np.any(phi) and not np.any(Psi.flat):
        trace.iterations[1.0] = 1
        trace.increments[1.0] = [0.0]
        return _field(g, th), ScalarField(g, np.zeros((g.N_r, g.N_th))), trace

    for lam in opts.lambda_schedule:
        incs, growth = [], 0
        converged = False
        for it in range(1, opts.picard_max_iters + 1):
            t = _field(g, th)
            nl = (convection_dual(t, Psi, skew) + convection_dual(Psi, t, skew)
                  + convection_dual(t, t, skew))[idx]
            new, q, _ = S.solve(lam * (phi - nl), refine_steps=1)
            d = opts.damping * (new - th)
            th = th + d
            inc = enorm(d)
            incs.append(inc)
            if not np.all(np.isfinite(th)):
                raise SolverError(f"Picard iteration produced non-finite values at lam={lam}")
            if len(incs) > 1 and inc > incs[-2]:
                growth += 1
                if growth >= 5:
                    raise SolverError(
                        f"Picard increments grew for 5 consecutive steps at lam={lam} "
                        f"({incs[-6:]}); reduce ||dF|| or refine the lambda schedule")
            else:
                growth = 0
            if inc <= opts.picard_tol * max(enorm(th), 1e-300):
                converged = True
                break
        trace.increments[lam] = incs
        trace.iterations[lam] = len(incs)
        ratios = [b / a for a, b in zip(incs, incs[1:]) if a > 0]
        trace.contraction[lam] = max(ratios[1:], default=ratios[0] if ratios else 0.0)
        if not converged:
            raise SolverError(
                f"Picard iteration did not converge in {opts.picard_max_iters} steps at "
                f"lam={lam}; last increments {incs[-3:]}")
    P = ScalarField(g, q.reshape(g.N_r, g.N_th))
    return _field(g, th), P, trace


def momentum_functional(w_R: OneFormField, Psi: OneFormField, Phi: WeakFunctional,
                        skew: bool = True):
    """``phi -> ((w_R, phi)) + nonlinear terms - <Phi, phi>``; a pressure gradient at the solution."""
    g = w_R.grid
    idx = g.dof_index()
    nl = (convection_dual(w_R, Psi, skew) + convection_dual(Psi, w_R, skew)
          + convection_dual(w_R, w_R, skew))[idx]
    return (energy_matrix_full(g) @ w_R.flat)[idx] + nl - Phi.values


def check_energy_identity(w_R: OneFormField, Psi: OneFormField, Phi: WeakFunctional,
                          skew: bool = True) -> EnergyReport:
    """Test the momentum equation with ``w_R`` itself."""
    g = w_R.grid
    a2 = g.a ** 2
    energy = float(w_R.dofs @ (energy_matrix_full(g)[g.dof_index()][:, g.dof_index()] @ w_R.dofs))
    l2 = l2_inner(w_R, w_R)
    cov = h1_seminorm_sq(w_R) + a2 * l2
    forcing = Phi.action(w_R)
    conv = trilinear(w_R, Psi, w_R, skew)
    b1 = trilinear(Psi, w_R, w_R, skew)
    b2 = trilinear(w_R, w_R, w_R, skew)
    res = energy - forcing + conv + b1 + b2
    scale = energy if energy > 0 else 1.0
    return EnergyReport(residual=abs(res) / scale if energy > 0 else abs(res),
                        energy=energy, energy_covariant=cov, forcing=forcing,
                        convective=conv, b_psi_w_w=b1, b_w_w_w=b2)


def check_apriori_bound(w_R: OneFormField, dF_norm: float,
                        constants: ConstantsReport) -> AprioriReport:
    """``||nabla w_R||^2 <= C^2 (|dF| + |dF|^2)^2 / (1 - 2 C |dF|)``."""
    C = constants.C_aR0
    lhs = h1_seminorm_sq(w_R)
    g = w_R.grid
    x = w_R.dofs
    lhs_energy = float(x @ (stokes_system(g).A @ x))
    den = 1.0 - 2.0 * C * dF_norm
    rhs = math.inf if den <= 0 else C * C * (dF_norm + dF_norm ** 2) ** 2 / den
    return AprioriReport(lhs, lhs_energy, rhs, bool(lhs <= rhs and lhs_energy <= rhs))


# ---------------------------------------------------------------------------
# exhaustion

@dataclass
class StageResult:
    R_out: float
    grid: AnnulusGrid
    w_R: OneFormField
    P: ScalarField
    trace: PicardTrace
    energy: EnergyReport


@dataclass
class ExhaustionReport:
    stages: list
    deltas: list
    glue_gaps: list
    glued_pressure: Optional[ScalarField]
    constants: Optional[ConstantsReport]


def _restrict(f: OneFormField, n: int, sub: AnnulusGrid) -> OneFormField:
    """Restriction to the first ``n`` radial cells; the new outer wall value is interpolated."""
    g = f.grid
    ur = f.ur[: n + 1].copy()
    ut = f.ut[:n].copy()
    if n < g.N_r:
        t = (g.r_f[n] - g.r_c[n - 1]) / (g.r_c[n] - g.r_c[n - 1])
        outer = f.ut[n - 1] + t * (f.ut[n] - f.ut[n - 1])
    else:
        outer = f.wall[1]
    wall = np.stack([f.wall[0], outer])
    return OneFormField(sub, ur, ut, wall, BC_FREE)


def exhaust_domains(spec: DomainSpec, schedule: ExhaustionSchedule,
                    harmonic: HarmonicSpec, opts: SolverOptions = SolverOptions(),
                    constants: Optional[ConstantsReport] = None,
                    samples: int = 20, seed: int = 0) -> ExhaustionReport:
    """Solve on ``Omega(R0, R_m)`` for every radius of the schedule.

    Reports the H1 differences of consecutive solutions on the innermost
    annulus and glues the local pressures recovered on the nested annuli
    from the final momentum functional.
    """
    schedule.validate(spec)
    stages = []
    for R in schedule.R:
        g = schedule.grid(spec, R)
        _, dF, eta, w = ingredients(spec, harmonic, g)
        Psi, Phi = assemble_psi_phi(eta, dF, w, g, opts.skew)
        if constants is None:
            constants = estimate_constants(g, samples, seed, spec, harmonic)
        wR, P, tr = solve_ns_annulus(g, Psi, Phi, opts, harmonic.dF_norm(), constants)
        stages.append(StageResult(R, g, wR, P, tr, check_energy_identity(wR, Psi, Phi, opts.skew)))
        last = (Psi, Phi)
    n1 = stages[0].grid.N_r
    sub = stages[0].grid
    deltas = []
    for s0, s1 in zip(stages, stages[1:]):
        d = _restrict(s1.w_R, n1, sub) - _restrict(s0.w_R, n1, sub)
        deltas.append(norms(d)["H1_full"])
    gN = stages[-1].grid
    L = momentum_functional(stages[-1].w_R, last[0], last[1], opts.skew)
    locs = recover_local_pressures(gN, L, [s.grid.N_r for s in stages])
    glued, rep = glue_pressure(locs)
    return ExhaustionReport(stages, deltas, rep.overlap_gaps, glued, constants)
