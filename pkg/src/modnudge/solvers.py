"""Matrix-free Krylov solvers shared by the steppers and the FEM lab.

Two workhorses:

* `solve_cg` -- preconditioned conjugate gradients over arbitrary numpy
  arrays with a caller-supplied inner product, for the SPD analysis and
  Schur systems;
* `solve_gmres` -- restarted GMRES for the nonsymmetric implicit
  momentum solve.  Spectral coefficient arrays are complex but the
  operator is only real-linear (inverse transforms pin the imaginary
  parts of the edge columns), so the complex array is reinterpreted as
  a real vector and scipy's GMRES runs in real arithmetic.

Failures raise KrylovError rather than returning best-effort iterates:
a silent half-converged solve would poison every identity downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres


class KrylovError(RuntimeError):
    """Raised when an iterative solve fails to reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = -1):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass
class SolveInfo:
    iterations: int
    residual: float


def solve_cg(
    apply_op: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    dot: Callable[[np.ndarray, np.ndarray], float] | None = None,
    x0: np.ndarray | None = None,
    tol: float = 1e-12,
    maxiter: int = 500,
    precondition: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, SolveInfo]:
    """Preconditioned CG for an SPD operator in the given inner product.

    Convergence is declared when ||b - A x|| <= tol * ||b|| in the norm
    induced by `dot` (plain real/complex-L2 dot when omitted).
    """
    if dot is None:
        dot = lambda u, v: float(np.real(np.vdot(u, v)))  # noqa: E731
    if precondition is None:
        precondition = lambda r: r  # noqa: E731

    bnorm = np.sqrt(dot(b, b))
    if bnorm == 0.0:
        return np.zeros_like(b), SolveInfo(0, 0.0)

    x = np.zeros_like(b) if x0 is None else np.array(x0, copy=True)
    r = b - apply_op(x)
    z = precondition(r)
    p = np.array(z, copy=True)
    rz = dot(r, z)
    resid = np.sqrt(dot(r, r))
    it = 0
    while resid > tol * bnorm:
        if it >= maxiter:
            raise KrylovError(
                f"CG stalled at relative residual {resid / bnorm:.3e} after {it} iterations",
                residual=resid / bnorm,
                iterations=it,
            )
        ap = apply_op(p)
        denom = dot(p, ap)
        if not np.isfinite(denom) or denom <= 0.0:
            raise KrylovError("CG hit a non-SPD direction (is the operator symmetric positive?)")
        alpha = rz / denom
        x += alpha * p
        r -= alpha * ap
        resid = np.sqrt(dot(r, r))
        if not np.isfinite(resid):
            raise KrylovError("CG produced a non-finite residual")
        z = precondition(r)
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return x, SolveInfo(it, resid / bnorm)


def solve_gmres(
    apply_op: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    maxiter: int = 500,
    restart: int = 64,
    precondition: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, SolveInfo]:
    """Restarted GMRES over complex coefficient arrays, run as real vectors.

    `apply_op` and `precondition` map coefficient arrays to coefficient
    arrays; `b` fixes the shape.  Relative tolerance is measured on the
    preconditioned residual, scipy semantics.  The returned SolveInfo
    carries the true relative residual (one extra operator application).
    """
    shape = b.shape
    breal = b.view(np.float64).ravel()
    nreal = breal.size
    count = [0]

    def matvec(xr: np.ndarray) -> np.ndarray:
        count[0] += 1
        x = np.ascontiguousarray(xr).view(np.complex128).reshape(shape)
        return np.ascontiguousarray(apply_op(x)).view(np.float64).ravel()

    operator = LinearOperator((nreal, nreal), matvec=matvec, dtype=np.float64)
    M = None
    if precondition is not None:

        def psolve(xr: np.ndarray) -> np.ndarray:
            x = np.ascontiguousarray(xr).view(np.complex128).reshape(shape)
            return np.ascontiguousarray(precondition(x)).view(np.float64).ravel()

        M = LinearOperator((nreal, nreal), matvec=psolve, dtype=np.float64)

    xr, info = gmres(
        operator,
        breal,
        x0=None if x0 is None else x0.view(np.float64).ravel(),
        rtol=tol,
        atol=0.0,
        restart=min(restart, nreal),
        maxiter=max(1, maxiter // max(1, min(restart, nreal))),
        M=M,
    )
    x = np.ascontiguousarray(xr).view(np.complex128).reshape(shape)
    bnorm = float(np.linalg.norm(breal))
    true_res = float(np.linalg.norm(breal - np.ascontiguousarray(apply_op(x)).view(np.float64).ravel()))
    rel = true_res / bnorm if bnorm > 0 else true_res
    if info != 0:
        raise KrylovError(
            f"GMRES failed to converge (scipy info={info}) within {maxiter} operator applications",
            residual=rel,
            iterations=count[0],
        )
    if not np.all(np.isfinite(x.view(np.float64))):
        raise KrylovError("GMRES produced non-finite values")
    return x, SolveInfo(count[0], rel)
