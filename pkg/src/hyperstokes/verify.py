"""Headline checks: the sign of the pairing, nontriviality of the solution,
non-potential flow and the functional inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calculus import (curl_inner, face_mass, h1_seminorm_sq, l2_inner, l4_norm, norms)
from .fields import HarmonicSpec
from .mesh import AnnulusGrid, GridError, OneFormField
from .navierstokes import harmonic_constants
from .probes import probe_set

ORTHOGONALITY_TOL = 1e-6


@dataclass
class NontrivialityReport:
    pairing: float
    eta_energy: float
    gap: float
    relative_gap: float
    u_h1_norm: float


@dataclass
class NonzeroReport:
    h1_norm: float
    certificate: float
    orthogonality: float
    orthogonality_relative: float
    ok: bool


@dataclass
class PotentialFlowReport:
    vorticity_l2: float
    vorticity_ratio: float
    best_potential_residual: float
    laurent_coeffs: dict = field(default_factory=dict)
    degenerate: bool = False


@dataclass
class InequalityReport:
    count: int
    poincare_pass: int
    poincare_max: float
    ladyzhenskaya_max: float
    ladyzhenskaya_finite: bool
    harmonic_ratios: dict


def _same(*fs):
    g = fs[0].grid
    for f in fs[1:]:
        if not f.grid.same_as(g):
            raise GridError("fields live on different grids")
    return g


def nontriviality(w: OneFormField, dF: OneFormField, eta, u: OneFormField,
                  grid: AnnulusGrid, harmonic: Optional[HarmonicSpec] = None) -> NontrivialityReport:
    """Pairing ``int g(w, dF) Vol`` against ``int eta g(dF, dF) Vol``.

    The cutoff equals one on the obstacle, so with ``harmonic`` given the
    energy includes the exact obstacle-disk term ``pi n c^2 r_in^(2n)``.
    """
    _same(w, dF, eta, u)
    if not np.any(dF.flat):
        raise ValueError("dF vanishes identically; the pairing test needs nontrivial data")
    pairing = l2_inner(w, dF)
    energy = float(np.dot(face_mass(grid), eta.face_values() * dF.flat ** 2))
    if harmonic is not None:
        energy += harmonic.full_disk_energy(grid.r_in)
    gap = abs(pairing + energy)
    return NontrivialityReport(pairing, energy, gap, gap / energy, norms(u)["H1_full"])


def nonzero_solution(u: OneFormField, dF: OneFormField, w: OneFormField,
                     w_tilde: OneFormField, eta) -> NonzeroReport:
    """Certificate that ``u`` is not zero.

    If ``u`` vanished, testing it against ``dF`` would force
    ``int (1 - eta) g(dF, dF) <= 0``; that integral is the certificate.
    """
    g = _same(u, dF, w, w_tilde, eta)
    h1 = norms(u)["H1_full"]
    cert = float(np.dot(face_mass(g), (1.0 - eta.face_values()) * dF.flat ** 2))
    orth = l2_inner(w_tilde, dF)
    scale = math.sqrt(l2_inner(w_tilde, w_tilde) * l2_inner(dF, dF))
    rel = abs(orth) / scale if scale > 0 else 0.0
    ok = h1 > 0 and cert > 0 and rel <= ORTHOGONALITY_TOL
    return NonzeroReport(h1, cert, orth, rel, bool(ok))


# ---------------------------------------------------------------------------
# potential flow

def _basis_column(g: AnnulusGrid, k: int, C: complex):
    """Flat samples of ``d Re(C z^k)`` (``k = 0`` means ``d log|z|``)."""
    def comps(r, th):
        if k == 0:
            return 1.0 / r + 0 * th, 0 * (r + th)
        zk = C * k * (r * np.exp(1j * th)) ** k / r
        return zk.real, (1j * zk).real
    ur, _ = comps(g.r_f[:, None], g.theta_c[None, :])
    _, ut = comps(g.r_c[:, None], g.theta_f[None, :])
    return np.concatenate([ur.ravel(), ut.ravel(), np.zeros(2 * g.N_th)])


def _basis(K):
    out = [(0, 1.0)]
    for k in range(1, K + 1):
        for s in (k, -k):
            out += [(s, 1.0), (s, -1j)]
    return out


def potential_flow_test(u: OneFormField, grid: AnnulusGrid, K: int = 8,
                        probe_radii: int = 3) -> PotentialFlowReport:
    """Vorticity and distance from the span of harmonic gradients.

    Laurent coefficients ``a_m`` of ``w1 - i w2`` (holomorphic for a
    harmonic gradient) of the fitted field are sampled by FFT on circles at
    the quartile geodesic radii; for an exact fit they agree across radii.
    """
    g = _same(u)
    l2 = math.sqrt(l2_inner(u, u))
    if l2 == 0:
        return PotentialFlowReport(0.0, 0.0, 0.0, {}, degenerate=True)
    vort = math.sqrt(max(curl_inner(u, u), 0.0))
    basis = _basis(K)
    wt = np.sqrt(face_mass(g))
    A = np.stack([_basis_column(g, k, C) for k, C in basis], axis=1) * wt[:, None]
    b = u.flat * wt
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    coef, *_ = np.linalg.lstsq(A / scale, b, rcond=None)
    coef = coef / scale
    resid = float(np.linalg.norm(b - A @ coef) / np.linalg.norm(b))

    M = 256
    th = 2 * np.pi * np.arange(M) / M
    radii = np.tanh(0.5 * g.a * np.quantile(g.rho_f, np.linspace(0.25, 0.75, probe_radii)))
    laurent = {}
    for rho in radii:
        z = rho * np.exp(1j * th)
        h = sum(c * (1.0 / z if k == 0 else C * k * z ** (k - 1)) for c, (k, C) in zip(coef, basis))
        a = np.fft.fft(h) / M
        for m in range(-K - 1, K):
            laurent.setdefault(m, []).append(abs(a[m % M]) / rho ** m)
    return PotentialFlowReport(vort, vort / l2, resid, laurent)


# ---------------------------------------------------------------------------
# inequalities

def inequality_suite(grid: AnnulusGrid, seed: int = 0, count: int = 100,
                     tol: float = 0.02, modes=(1, 2, 3, 4)) -> InequalityReport:
    """Poincare and Ladyzhenskaya quotients on seeded probes, harmonic ratios per mode."""
    probes = probe_set(grid, count, seed)
    a = grid.a
    passed, pmax, lmax = 0, 0.0, 0.0
    finite = True
    for p in probes:
        l2 = math.sqrt(l2_inner(p, p))
        gr = math.sqrt(h1_seminorm_sq(p))
        if l2 == 0 or gr == 0:
            continue
        q = a * l2 / gr
        pmax = max(pmax, q)
        passed += int(q <= 1.0 + tol)
        lq = l4_norm(p) ** 2 / (l2 * gr)
        finite &= bool(np.isfinite(lq))
        lmax = max(lmax, lq)
    return InequalityReport(len(probes), passed, pmax, lmax, finite,
                            harmonic_constants(grid, modes))
