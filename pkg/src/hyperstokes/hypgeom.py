"""Poincare disk chart for the hyperbolic plane of curvature -a^2.

The metric is ``4 / (a^2 (1 - |y|^2)^2)`` times the Euclidean one.  In two
dimensions the pointwise pairing weight of 1-form components and the volume
weight are reciprocal, which is what lets most integrals be evaluated in
Euclidean disk coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Raised for points or radii outside the chart."""


@dataclass(frozen=True)
class DomainSpec:
    """Curvature ``a``, obstacle geodesic radius ``R0`` and viscosity ``mu``."""

    a: float = 1.0
    R0: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise GeometryError(f"curvature parameter must be positive, got {self.a}")
        if not (math.isfinite(self.R0) and self.R0 > 0):
            raise GeometryError(f"obstacle radius must be positive, got {self.R0}")
        if self.mu != 1.0:
            raise GeometryError("viscosity is fixed to 1")

    @property
    def chart(self) -> "DiskChart":
        return DiskChart(self.a)


@dataclass(frozen=True)
class DiskChart:
    a: float = 1.0

    def conformal_factor(self, y):
        s2 = _norm2(y)
        return 2.0 / (self.a * (1.0 - s2))

    def volume_weight(self, y):
        s2 = _norm2(y)
        return 4.0 / (self.a ** 2 * (1.0 - s2) ** 2)

    def pairing_weight(self, y):
        s2 = _norm2(y)
        return self.a ** 2 * (1.0 - s2) ** 2 / 4.0


def _norm2(y):
    y = np.asarray(y, dtype=float)
    if y.ndim == 0 or y.shape[-1] != 2:
        raise GeometryError("disk points need a trailing axis of length 2")
    s2 = np.sum(y * y, axis=-1)
    if np.any(~np.isfinite(s2)) or np.any(s2 >= 1.0):
        raise GeometryError("point lies on or outside the ideal boundary |y| = 1")
    return s2


def _check_a(a):
    if not (np.isfinite(a) and a > 0):
        raise GeometryError(f"curvature parameter must be positive, got {a}")


class DiskRadius(float):
    """A disk radius that also carries its complement ``1 - r``.

    Near the rim ``r`` itself has too few significant digits to recover the
    geodesic radius; the complement keeps the conversion exact to rounding.
    """

    complement: float

    def __new__(cls, r, complement):
        obj = super().__new__(cls, r)
        obj.complement = float(complement)
        return obj


def geodesic_to_disk(a, R):
    """Disk radius ``tanh(a R / 2)`` of the geodesic circle of radius ``R``.

    Scalars are returned as :class:`DiskRadius`, which remembers ``1 - r``.
    """
    _check_a(a)
    R_arr = np.asarray(R, dtype=float)
    if np.any(~np.isfinite(R_arr)) or np.any(R_arr < 0):
        raise GeometryError("geodesic radius must be finite and nonnegative")
    r = np.tanh(0.5 * a * R_arr)
    if np.ndim(r) == 0:
        return DiskRadius(r, 2.0 / (math.exp(a * float(R_arr)) + 1.0))
    return r


def disk_to_geodesic(a, r):
    """Geodesic radius ``(1/a) log((1+r)/(1-r))`` of the disk radius ``r``."""
    _check_a(a)
    r_arr = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(r_arr)) or np.any(r_arr < 0):
        raise GeometryError("disk radius must be finite and nonnegative")
    if np.any(r_arr >= 1.0):
        raise GeometryError("disk radius r >= 1 is the ideal boundary")
    if isinstance(r, DiskRadius) and r > 0.5:
        om = r.complement
        return math.log((2.0 - om) / om) / a
    R = (2.0 / a) * np.arctanh(r_arr)
    return float(R) if np.ndim(R) == 0 else R


def conformal_weights(chart: DiskChart, y):
    """Return ``(pairing_weight, volume_weight)`` at disk point(s) ``y``.

    The pairing weight multiplies ``u1 v1 + u2 v2`` to give ``g(u, v)`` for
    1-forms; the volume weight turns ``dy`` into the hyperbolic area element.
    Their product is one.
    """
    s2 = _norm2(y)
    q = 1.0 - s2
    pw = chart.a ** 2 * q * q / 4.0
    vw = 4.0 / (chart.a ** 2 * q * q)
    return pw, vw


def radial_weights(a, r):
    """Pairing and volume weights as functions of the disk radius."""
    r = np.asarray(r, dtype=float)
    if np.any(r >= 1.0):
        raise GeometryError("disk radius r >= 1 is the ideal boundary")
    q = (1.0 - r) * (1.0 + r)
    return a * a * q * q / 4.0, 4.0 / (a * a * q * q)


def christoffel_rate(r):
    """Radial derivative of the log conformal factor, ``2 r / (1 - r^2)``."""
    r = np.asarray(r, dtype=float)
    return 2.0 * r / ((1.0 - r) * (1.0 + r))
