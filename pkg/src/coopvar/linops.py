"""Dirichlet Laplacian on the whole domain or on Omega_0, the shifted operator
(A - lambda I), its cached sparse factorization and the non-local quadratic form.

The half power (A - lambda I)^{-1/2} never enters the production path: the
non-local energy uses the identity |(A - lambda)^{-1/2} u|^2 = <u, (A - lambda)^{-1} u>.
The dense route in :meth:`ShiftedOperator.inv_sqrt_apply` exists only to check it.
"""

from __future__ import annotations

import threading

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import EmptyRegion, InvalidParameter, RegionTooLarge, ShiftNotAdmissible
from .grid import Grid

FULL = "full"
ZERO_ONLY = "zero_only"
REGIONS = (FULL, ZERO_ONLY)

DENSE_LIMIT = 20000
_CACHE_SIZE = 8


def laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def laplacian(grid: Grid) -> sp.csr_matrix:
    """Second-order central-difference -Laplacian with homogeneous Dirichlet data."""
    mats = [laplacian_1d(m, hk) for m, hk in zip(grid.n, grid.h)]
    if grid.dimension == 1:
        return mats[0]
    nx, ny = grid.n
    return (sp.kron(mats[0], sp.identity(ny)) + sp.kron(sp.identity(nx), mats[1])).tocsr()


class ShiftedOperator:
    """-Laplacian on a region, with factorizations of (A - lambda I) cached per lambda.

    For ``region="zero_only"`` the matrix is the principal submatrix of the full
    Laplacian on the ZERO nodes, i.e. Dirichlet data is imposed on every non-ZERO
    neighbour.
    """

    def __init__(self, grid: Grid, region: str = FULL):
        if region not in REGIONS:
            raise InvalidParameter(f"region must be one of {REGIONS}, got {region!r}")
        self.grid = grid
        self.region = region
        full = laplacian(grid)
        if region == FULL:
            self.nodes = np.arange(grid.size)
            self.matrix = full.tocsc()
        else:
            self.nodes = grid.zero_index
            self.matrix = full[self.nodes][:, self.nodes].tocsc()
        if self.nodes.size == 0:
            raise EmptyRegion(f"region {region!r} has no nodes")
        self.size = self.nodes.size
        self.cell_volume = grid.cell_volume
        self._factors: dict[float, object] = {}
        self._dense_inv: dict[float, np.ndarray] = {}
        self._eigh = None
        self._sigma1 = None
        self._lock = threading.Lock()

    def __repr__(self):
        return f"ShiftedOperator(region={self.region!r}, size={self.size})"

    @property
    def sigma1(self) -> float:
        """Smallest eigenvalue of A, used for admissibility checks.

        Computed by ARPACK shift-invert; the spectra module computes the same
        number independently by inverse power iteration.
        """
        if self._sigma1 is None:
            if self.size <= 64:
                val = sla.eigvalsh(self.matrix.toarray(), subset_by_index=[0, 0])[0]
            else:
                val = spla.eigsh(self.matrix, k=1, sigma=0.0, which="LM", v0=np.ones(self.size),
                                 return_eigenvectors=False, tol=1e-14)[0]
            self._sigma1 = float(val)
        return self._sigma1

    def components(self) -> tuple[int, np.ndarray]:
        """Connected components of the region's lattice graph."""
        return connected_components(self.matrix, directed=False)

    def check_shift(self, lam: float) -> None:
        if not lam < self.sigma1:
            raise ShiftNotAdmissible(lam, self.sigma1, self.region)

    def shifted(self, lam: float) -> sp.csc_matrix:
        return (self.matrix - lam * sp.identity(self.size, format="csc")).tocsc()

    def apply(self, u: np.ndarray, lam: float = 0.0) -> np.ndarray:
        """(A - lambda I) u."""
        return self.matrix @ u - lam * u

    def factor(self, lam: float):
        lam = float(lam)
        fac = self._factors.get(lam)
        if fac is not None:
            return fac
        self.check_shift(lam)
        with self._lock:
            fac = self._factors.get(lam)
            if fac is None:
                fac = spla.splu(self.shifted(lam))
                if len(self._factors) >= _CACHE_SIZE:
                    self._factors.pop(next(iter(self._factors)))
                self._factors[lam] = fac
        return fac

    def solve(self, lam: float, rhs: np.ndarray) -> np.ndarray:
        """x with (A - lambda I) x = rhs; rhs may be a vector or a column stack."""
        rhs = np.asarray(rhs, dtype=float)
        return self.factor(lam).solve(rhs)

    def quadform(self, lam: float, u: np.ndarray, w: np.ndarray | None = None) -> float:
        """h^d <u, (A - lambda I)^{-1} w>  (w defaults to u)."""
        u = np.asarray(u, dtype=float)
        w = u if w is None else np.asarray(w, dtype=float)
        if not np.any(w):
            return 0.0
        return float(u @ self.solve(lam, w)) * self.cell_volume

    def dense_inverse(self, lam: float) -> np.ndarray:
        lam = float(lam)
        inv = self._dense_inv.get(lam)
        if inv is None:
            inv = self.solve(lam, np.eye(self.size))
            inv = 0.5 * (inv + inv.T)
            self._dense_inv = {lam: inv}
        return inv

    def eigh(self):
        """Dense eigendecomposition of A (validation path only)."""
        if self.size > DENSE_LIMIT:
            raise RegionTooLarge(f"region has {self.size} nodes > {DENSE_LIMIT}")
        if self._eigh is None:
            self._eigh = np.linalg.eigh(self.matrix.toarray())
        return self._eigh

    def inv_sqrt_apply(self, lam: float, u: np.ndarray) -> np.ndarray:
        """S u with S = V diag((mu_i - lambda)^{-1/2}) V^T."""
        if self.size > DENSE_LIMIT:
            raise RegionTooLarge(f"region has {self.size} nodes > {DENSE_LIMIT}")
        self.check_shift(lam)
        mu, vecs = self.eigh()
        return vecs @ ((vecs.T @ u) / np.sqrt(mu - lam))


def assemble(grid: Grid, region: str = FULL) -> ShiftedOperator:
    return ShiftedOperator(grid, region)


def shifted_solve(op: ShiftedOperator, lam: float, rhs: np.ndarray) -> np.ndarray:
    return op.solve(lam, rhs)


def nonlocal_quadform(op: ShiftedOperator, lam: float, u: np.ndarray) -> float:
    return op.quadform(lam, u)


def inv_sqrt_apply(op: ShiftedOperator, lam: float, u: np.ndarray) -> np.ndarray:
    return op.inv_sqrt_apply(lam, u)


def l2_inner(grid_or_op, u: np.ndarray, w: np.ndarray) -> float:
    return float(np.dot(u, w)) * grid_or_op.cell_volume


def l2_norm(grid_or_op, u: np.ndarray) -> float:
    return float(np.sqrt(l2_inner(grid_or_op, u, u)))
