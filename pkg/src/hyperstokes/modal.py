"""Block-diagonal solves for rotation-equivariant operators.

Every operator assembled on an :class:`AnnulusGrid` commutes with rotation by
one angular cell.  Writing each unknown as a Fourier series in its own
sample angle turns the system into ``N_th // 2 + 1`` independent radial
systems, each factorized with a sparse LU.  This is an exact
reformulation of the physical-space system, not an approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Block:
    """A group of unknowns arranged as ``(n_rows, N_th)`` with angles
    ``theta0 + j * dth``."""

    n_rows: int
    theta0: float


class ModalSolver:
    """Factorize a real square matrix that is equivariant under rotation.

    Parameters
    ----------
    matrix : sparse (n, n)
        Physical-space operator; unknowns ordered block by block, each block
        row-major over ``(row, j)``.
    blocks : list of Block
    N_th : int
    border : optional (n,) array
        Adds the constraint ``border . x = 0`` with a Lagrange multiplier to
        the zero mode, removing a one-dimensional kernel (e.g. constant
        pressure).  ``border`` must be invariant under rotation.
    """

    def __init__(self, matrix, blocks, N_th, border=None):
        self.N = int(N_th)
        self.blocks = list(blocks)
        self.dth = 2 * np.pi / self.N
        sizes = [b.n_rows * self.N for b in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        n = int(self.offsets[-1])
        M = sp.csr_matrix(matrix)
        if M.shape != (n, n):
            raise SolverError("matrix does not match the block layout")
        self.n = n
        self.m = sum(b.n_rows for b in self.blocks)
        moff = np.concatenate([[0], np.cumsum([b.n_rows for b in self.blocks])])

        # per unknown: mode-row index and sample angle
        rowid = np.empty(n, dtype=np.int64)
        ang = np.empty(n)
        jidx = np.empty(n, dtype=np.int64)
        for k, b in enumerate(self.blocks):
            sl = slice(self.offsets[k], self.offsets[k + 1])
            R, J = np.meshgrid(np.arange(b.n_rows), np.arange(self.N), indexing="ij")
            rowid[sl] = (moff[k] + R).ravel()
            ang[sl] = (b.theta0 + J * self.dth).ravel()
            jidx[sl] = J.ravel()
        rows0 = np.flatnonzero(jidx == 0)
        sub = M[rows0].tocoo()
        self._r = rowid[rows0][sub.row]
        self._c = rowid[sub.col]
        self._dphi = ang[sub.col] - ang[rows0][sub.row]
        self._v = sub.data
        self._border = None
        if border is not None:
            border = np.asarray(border, dtype=float)
            # zero-mode restriction: sum over angles of each radial row
            bm = np.zeros(self.m)
            np.add.at(bm, rowid, border)
            self._border = bm
        self.modes = np.arange(self.N // 2 + 1)
        self._lu = {}
        for k in self.modes:
            self._lu[k] = self._factor(k)

    def mode_matrix(self, k):
        if k == 0:
            data = self._v.astype(float)
        else:
            data = self._v * np.exp(1j * k * self._dphi)
        Mk = sp.coo_matrix((data, (self._r, self._c)), shape=(self.m, self.m)).tocsc()
        Mk.sum_duplicates()
        return Mk

    def _factor(self, k):
        Mk = self.mode_matrix(k)
        if k == 0 and self._border is not None:
            b = sp.csc_matrix(self._border.reshape(-1, 1))
            Mk = sp.bmat([[Mk, b], [b.T, None]], format="csc")
        try:
            return spla.splu(Mk, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"singular mode-{k} block: {exc}") from exc

    # transforms ------------------------------------------------------------
    def forward(self, x):
        """Fourier coefficients, shape ``(m, N//2 + 1)``."""
        out = []
        for k, b in enumerate(self.blocks):
            xb = x[self.offsets[k]: self.offsets[k + 1]].reshape(b.n_rows, self.N)
            X = np.fft.rfft(xb, axis=1) / self.N
            X *= np.exp(-1j * self.modes * b.theta0)[None, :]
            out.append(X)
        return np.concatenate(out, axis=0)

    def inverse(self, X):
        parts = []
        r0 = 0
        for b in self.blocks:
            Xb = X[r0: r0 + b.n_rows] * np.exp(1j * self.modes * b.theta0)[None, :]
            r0 += b.n_rows
            Xb = Xb.copy()
            # Nyquist and zero modes must be real after the phase shift
            Xb[:, 0] = Xb[:, 0].real
            if self.N % 2 == 0:
                Xb[:, -1] = Xb[:, -1].real
            parts.append(np.fft.irfft(Xb, n=self.N, axis=1).ravel() * self.N)
        return np.concatenate(parts)

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        X = self.forward(rhs)
        Y = np.empty_like(X)
        for k in self.modes:
            col = X[:, k]
            if k == 0:
                col = col.real
                if self._border is not None:
                    col = np.concatenate([col, [0.0]])
                y = self._lu[k].solve(col)[: self.m]
            else:
                y = self._lu[k].solve(col)
            Y[:, k] = y
        return self.inverse(Y)
