"""Stokes and small-data Navier-Stokes flow past an obstacle in the
hyperbolic plane, discretized on staggered polar grids in the Poincare disk."""

from .hypgeom import DomainSpec, DiskChart, geodesic_to_disk, disk_to_geodesic
from .mesh import AnnulusGrid, OneFormField, ScalarField, TensorField, build_annulus_grid
from .fields import HarmonicSpec, CutoffSpec, harmonic_pair, cutoff, divergence_rhs
from .divsolve import solve_divergence
from .stokes import solve_stokes, stokes_rhs, assemble_solution, weak_residual, glue_pressure
from .navierstokes import (SolverOptions, ExhaustionSchedule, estimate_constants,
                           solve_ns_annulus, exhaust_domains)
from .verify import nontriviality, nonzero_solution, potential_flow_test, inequality_suite

__version__ = "0.1.0"
