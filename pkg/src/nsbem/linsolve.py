"""Direct dense solve of the collocation system."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .assembly import DenseSystem
from .errors import SingularSystemError

RESIDUAL_TOL = 1e-10


@dataclass
class Solution:
    """Per-node phi and q after scattering the solve through the unknown map."""

    phi: np.ndarray
    q: np.ndarray
    residual: float
    gauge: Optional[str] = None


def solve_dense(system: DenseSystem) -> Solution:
    """LU-factorize (partial pivoting) and solve, asserting the residual.

    The relative residual ||Ax - b|| / ||b|| must come out below 1e-10 (for
    b = 0 the absolute residual is used); otherwise the matrix is reported
    singular with the offending pivot.
    """
    a = system.matrix
    b = system.rhs
    if a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
        raise SingularSystemError(-1, "system is not square")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise SingularSystemError(-1, "system contains non-finite entries")
    lu, piv = sla.lu_factor(a, check_finite=False)
    diag = np.abs(np.diag(lu))
    scale = np.max(diag) if diag.size else 0.0
    if scale == 0.0 or np.min(diag) <= 1e-300:
        raise SingularSystemError(
            int(np.argmin(diag)),
            "zero pivot: un-pinned Neumann nullspace or duplicate nodes?")
    x = sla.lu_solve((lu, piv), b, check_finite=False)
    bnorm = np.linalg.norm(b)
    resid = np.linalg.norm(a @ x - b) / (bnorm if bnorm > 0.0 else 1.0)
    if not np.isfinite(resid) or resid > RESIDUAL_TOL:
        raise SingularSystemError(
            int(np.argmin(diag)),
            f"relative residual {resid:.2e} exceeds {RESIDUAL_TOL:.0e}: "
            "un-pinned Neumann nullspace or duplicate nodes?")
    phi = np.where(system.unknown_q, system.bcs.value, x)
    q = np.where(system.unknown_q, x, system.bcs.value)
    return Solution(phi=phi, q=q, residual=float(resid), gauge=system.gauge)
