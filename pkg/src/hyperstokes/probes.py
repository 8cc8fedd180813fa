"""Seeded random test fields for Rayleigh-quotient sweeps."""

from __future__ import annotations

import numpy as np

from .calculus import stream_field
from .mesh import AnnulusGrid, OneFormField, BC_BOTH

MAX_MODE = 6


def _envelope(rng, g: AnnulusGrid, rho):
    """Smooth radial envelope vanishing at both walls, localized at a random radius."""
    R_in, R_out = g.R_in, g.R_out
    s = (rho - R_in) / (R_out - R_in)
    centre = rng.uniform(R_in, R_out)
    width = rng.uniform(0.2, 1.0) * (R_out - R_in)
    return np.sin(np.pi * np.clip(s, 0.0, 1.0)) ** 2 * np.exp(-((rho - centre) / width) ** 2)


def _angular(rng, theta):
    m = rng.integers(0, MAX_MODE + 1, size=3)
    c = rng.standard_normal((3, 2))
    return sum(c[k, 0] * np.cos(m[k] * theta) + c[k, 1] * np.sin(m[k] * theta) for k in range(3))


def random_field(rng, g: AnnulusGrid) -> OneFormField:
    """Smooth zero-boundary 1-form (not divergence free)."""
    ur = _envelope(rng, g, g.rho_f)[:, None] * _angular(rng, g.theta_c)[None, :]
    ut = _envelope(rng, g, g.rho_c)[:, None] * _angular(rng, g.theta_f)[None, :]
    ur[0] = 0.0
    ur[-1] = 0.0
    return OneFormField(g, ur, ut, None, BC_BOTH)


def random_divfree_field(rng, g: AnnulusGrid) -> OneFormField:
    """Smooth discretely divergence-free zero-boundary 1-form from a stream function."""
    # squared envelope so the tangential component also vanishes at the walls
    env = _envelope(rng, g, g.rho_f) ** 2
    psi = env[:, None] * _angular(rng, g.theta_f)[None, :]
    return stream_field(g, psi)


def probe_set(g: AnnulusGrid, count: int, seed: int, divergence_free: bool = False):
    rng = np.random.default_rng(seed)
    make = random_divfree_field if divergence_free else random_field
    out = []
    while len(out) < count:
        f = make(rng, g)
        if np.any(f.flat):
            out.append(f)
    return out
