"""Principal eigenpairs, maximizers and Rayleigh quotients.

The eigenproblem is posed for the positive form ``M = (-Delta)^{alpha/2} - V``
(``M = -A`` for the assembled operator ``A``), so with ``V = 0`` the smallest
eigenvalue of ``M`` is ``lambda_{1,alpha}`` of the domain.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fraclap import DiscreteOperator
from .geometry import Domain

DENSE_LIMIT = 4000


class EigenSolverError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass
class EigenPair:
    lam: float
    phi: np.ndarray
    residual: float
    iterations: int
    shift: float = 0.0

    def to_json(self) -> dict:
        return {"lambda": self.lam, "residual": self.residual, "iterations": self.iterations,
                "shift": self.shift}

    def write(self, directory: str | Path, domain: Domain, stem: str = "eigenpair") -> None:
        """Write ``<stem>.json`` and the raw eigenfunction as ``<stem>_phi.csv``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{stem}.json").write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        pts = domain.interior_points
        with open(directory / f"{stem}_phi.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{k}" for k in range(domain.d)] + ["phi"])
            for p, v in zip(pts, self.phi):
                writer.writerow([repr(float(c)) for c in p] + [repr(float(v))])


@dataclass
class MaximizerReport:
    x0: np.ndarray
    value: float
    distance: float
    tie_set: np.ndarray
    index: int


def _positive_form(op: DiscreteOperator):
    """Return (matvec, dense-or-sparse matrix or None) for ``M = L - V``."""
    V = op.V

    def mv(u):
        return op.laplacian_matvec(u) - V * u

    if op.alpha == 2:
        return mv, (op.laplacian_matrix() - sp.diags(V)).tocsc()
    if op.n <= DENSE_LIMIT:
        return mv, op.laplacian_matrix() - np.diag(V)
    return mv, None


def _gershgorin_floor(op: DiscreteOperator, M) -> float:
    """Lower bound on the spectrum of ``M``."""
    if M is None:
        # diagonal minus the full off-diagonal coupling of an interior row
        ones = np.ones(op.n)
        diag = op.diagonal_laplacian()
        off = diag - op.laplacian_matvec(ones)
        return float(np.min(diag - off - op.V))
    if sp.issparse(M):
        diag = M.diagonal()
        off = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(diag)
    else:
        diag = np.diag(M)
        off = np.abs(M).sum(axis=1) - np.abs(diag)
    return float(np.min(diag - off))


def principal_eigenpair(op: DiscreteOperator, tol: float = 1e-8, max_iter: int = 500) -> EigenPair:
    """Smallest eigenvalue of ``M = (-Delta)^{alpha/2} - V`` with a positive eigenvector.

    Shift-invert Lanczos (ARPACK) from the all-ones start vector.  The inner
    solves use a Cholesky / sparse LU factorisation, or conjugate gradients
    on the FFT matvec for large nonlocal problems.  When ``M`` may be
    indefinite the shift is moved below the Gershgorin floor.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = op.n
    mv, M = _positive_form(op)
    floor = _gershgorin_floor(op, M)
    shift = 0.0 if floor > 0 else floor - 1.0 - abs(floor) * 0.1
    counter = {"solves": 0}

    if M is None:
        def solve(b):
            counter["solves"] += 1
            shifted = spla.LinearOperator((n, n), matvec=lambda x: mv(x) - shift * x, dtype=float)
            x, info = spla.cg(shifted, b, rtol=1e-13, atol=0.0, maxiter=20 * n)
            if info != 0:
                raise EigenSolverError("inner conjugate-gradient solve did not converge")
            return x
    elif sp.issparse(M):
        lu = spla.splu((M - shift * sp.identity(n, format="csc")).tocsc())

        def solve(b):
            counter["solves"] += 1
            return lu.solve(b)
    else:
        chol = sla.cho_factor(M - shift * np.eye(n), lower=False, check_finite=False)

        def solve(b):
            counter["solves"] += 1
            return sla.cho_solve(chol, b, check_finite=False)

    if n == 1:
        lam = float(mv(np.ones(1))[0])
        return EigenPair(lam, np.ones(1), 0.0, 0, shift)
    Mop = spla.LinearOperator((n, n), matvec=mv, dtype=float)
    OPinv = spla.LinearOperator((n, n), matvec=solve, dtype=float)
    v0 = np.ones(n) / np.sqrt(n)
    try:
        vals, vecs = spla.eigsh(Mop, k=1, sigma=shift, which="LM", OPinv=OPinv, v0=v0,
                                tol=tol * 1e-2, maxiter=max_iter)
    except spla.ArpackNoConvergence as exc:
        last = exc.eigenvectors[:, 0] if exc.eigenvectors.size else v0
        raise EigenSolverError("eigen solver did not converge",
                               residual=float(np.max(np.abs(mv(last) - (last @ mv(last)) * last)))) from exc
    phi = vecs[:, 0]
    if phi.sum() < 0:
        phi = -phi
    phi = phi / np.max(phi)
    lam = float(phi @ mv(phi) / (phi @ phi))
    residual = float(np.max(np.abs(mv(phi) - lam * phi)))
    if residual > 100 * tol * max(1.0, abs(lam)):
        raise EigenSolverError(f"residual {residual:.3g} above tolerance", residual=residual)
    return EigenPair(lam, phi, residual, counter["solves"], shift)


def maximizer(phi: np.ndarray, domain: Domain, rtol: float = 1e-8) -> MaximizerReport:
    """Maximizer of ``|phi|``: first node in row-major order plus the near-tie set."""
    a = np.abs(np.asarray(phi, dtype=float))
    if a.shape != (domain.n_interior,):
        raise ValueError("phi must be defined on the interior nodes")
    top = float(a.max()) if a.size else 0.0
    if top == 0:
        raise ValueError("null eigenfunction")
    i = int(np.argmax(a))
    pts = domain.interior_points
    ties = pts[a >= (1 - rtol) * top]
    x0 = pts[i]
    dist = float(domain.boundary_distance(x0[None])[0])
    return MaximizerReport(x0, top, dist, ties, i)


def rayleigh_quotient(op: DiscreteOperator, u: np.ndarray) -> float:
    """``<M u, u> / <u, u>`` for ``M = (-Delta)^{alpha/2} - V``."""
    u = np.asarray(u, dtype=float)
    uu = float(u @ u)
    if uu == 0:
        raise ValueError("zero function has no Rayleigh quotient")
    return float((op.laplacian_matvec(u) - op.V * u) @ u / uu)


def l2_norm(u: np.ndarray, domain: Domain) -> float:
    """``(sum u^2 h^d)^{1/2}``."""
    return float(np.sqrt(np.sum(np.asarray(u) ** 2) * domain.cell_volume))
