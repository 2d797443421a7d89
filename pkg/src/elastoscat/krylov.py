"""Restarted GMRES for several right-hand sides sharing one block matvec.

Each column runs its own Arnoldi process; only the operator application is
batched, so the cost of reading a dense (or FFT) operator is paid once per
iteration for all columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ConvergenceError", "KrylovInfo", "gmres"]


class ConvergenceError(RuntimeError):
    """Raised when the iteration budget is exhausted; carries the history."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class KrylovInfo:
    iterations: int
    residuals: np.ndarray  # final true relative residual per column
    history: list = field(default_factory=list)  # estimated residual per iteration
    converged: bool = True


def _givens(a, b):
    # complex Givens rotation zeroing b against a
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, np.conj(b) / abs(b)
    t = np.hypot(abs(a), abs(b))
    c = abs(a) / t
    s = (a / abs(a)) * np.conj(b) / t
    return c, s


def gmres(
    matvec,
    b,
    *,
    precond=None,
    x0=None,
    rtol=1e-10,
    restart=None,
    maxiter=None,
    raise_on_fail=True,
):
    """Solve ``A x = b`` column by column with right preconditioning.

    Parameters
    ----------
    matvec : callable mapping an (n, k) array to an (n, k) array.
    b : (n,) or (n, k) right-hand sides.
    precond : optional callable applying an approximate inverse to (n, k).
    rtol : target ``||b - A x|| / ||b||`` per column.
    restart : Krylov dimension per cycle (default: no restart within maxiter).
    maxiter : total iteration budget (default ``10 * sqrt(n) + 50``).
    """
    squeeze = b.ndim == 1
    B = b[:, None] if squeeze else b
    n, k = B.shape
    dtype = np.result_type(B.dtype, np.float64)
    if maxiter is None:
        maxiter = int(10 * np.sqrt(n)) + 50
    if restart is None:
        restart = maxiter
    restart = min(restart, maxiter)
    M = precond if precond is not None else (lambda v: v)

    X = np.zeros((n, k), dtype=dtype) if x0 is None else np.array(x0, dtype=dtype).reshape(n, k)
    bnorm = np.linalg.norm(B, axis=0)
    bnorm[bnorm == 0] = 1.0
    history = []
    total = 0

    def true_residual(X):
        R = B - matvec(X)
        return R, np.linalg.norm(R, axis=0) / bnorm

    R, rel = true_residual(X)
    while True:
        active = rel > rtol
        if not np.any(active) or total >= maxiter:
            break
        beta = np.linalg.norm(R, axis=0)
        V = np.zeros((restart + 1, n, k), dtype=np.result_type(dtype, R.dtype))
        H = np.zeros((k, restart + 1, restart), dtype=V.dtype)
        cs = np.zeros((k, restart), dtype=V.dtype)
        sn = np.zeros((k, restart), dtype=V.dtype)
        g = np.zeros((k, restart + 1), dtype=V.dtype)
        g[:, 0] = beta
        V[0] = R / np.where(beta == 0, 1, beta)
        live = active.copy()
        steps = np.zeros(k, dtype=int)
        for j in range(restart):
            if not np.any(live) or total >= maxiter:
                break
            W = matvec(M(V[j]))
            # modified Gram-Schmidt, twice for stability
            for _ in range(2):
                for i in range(j + 1):
                    h = np.einsum("nk,nk->k", V[i].conj(), W)
                    H[:, i, j] += h
                    W = W - V[i] * h
            hn = np.linalg.norm(W, axis=0)
            H[:, j + 1, j] = hn
            V[j + 1] = W / np.where(hn == 0, 1, hn)
            for c in np.nonzero(live)[0]:
                for i in range(j):
                    t = cs[c, i] * H[c, i, j] + sn[c, i] * H[c, i + 1, j]
                    H[c, i + 1, j] = -np.conj(sn[c, i]) * H[c, i, j] + cs[c, i] * H[c, i + 1, j]
                    H[c, i, j] = t
                cs[c, j], sn[c, j] = _givens(H[c, j, j], H[c, j + 1, j])
                H[c, j, j] = cs[c, j] * H[c, j, j] + sn[c, j] * H[c, j + 1, j]
                H[c, j + 1, j] = 0
                g[c, j + 1] = -np.conj(sn[c, j]) * g[c, j]
                g[c, j] = cs[c, j] * g[c, j]
                steps[c] = j + 1
            est = np.abs(g[np.arange(k), steps]) / bnorm
            history.append(np.where(active, est, rel))
            total += 1
            # stop iterating a column once its estimate is well below target
            live &= est > 0.5 * rtol
            live &= hn > 0
        for c in np.nonzero(active)[0]:
            m = steps[c]
            if m == 0:
                continue
            y = np.linalg.solve(np.triu(H[c, :m, :m]), g[c, :m])
            X[:, c] += M(np.einsum("m,mn->n", y, V[:m, :, c])[:, None])[:, 0]
        R, rel = true_residual(X)

    converged = bool(np.all(rel <= rtol))
    info = KrylovInfo(total, rel, history, converged)
    if not converged and raise_on_fail:
        raise ConvergenceError(
            f"GMRES did not reach rtol={rtol:.1e} in {total} iterations "
            f"(final relative residuals {np.array2string(rel, precision=3)})",
            history,
        )
    return (X[:, 0] if squeeze else X), info
