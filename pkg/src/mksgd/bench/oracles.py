"""Reference solvers for the benchmark problems.

Nothing here imports the manifold or optimizer modules: the eigensolver, the
SVD and the restart search are written against plain numpy/scipy so they can
check the optimizer instead of repeating it.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize


def power_iteration(B, tol=1e-13, max_iter=100_000, seed=0, squarings=8):
    """Dominant eigenpair of a symmetric positive semidefinite matrix ``B``.

    The iteration runs on ``B**(2**squarings)`` (same eigenvectors, gap ratio
    raised to that power) and finishes with a few plain steps on ``B`` before
    taking the Rayleigh quotient.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    scale = np.linalg.norm(B)
    if scale == 0:
        return 0.0, np.eye(n)[:, 0]
    C = B / scale
    for _ in range(squarings):
        C = C @ C
        c = np.linalg.norm(C)
        if c == 0:
            break
        C = C / c
        C = 0.5 * (C + C.T)
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = C @ x
        ny = np.linalg.norm(y)
        if ny == 0:
            break
        y /= ny
        if y @ x < 0:
            y = -y
        done = np.linalg.norm(y - x) < tol
        x = y
        if done:
            break
    for _ in range(3):
        y = B @ x
        ny = np.linalg.norm(y)
        if ny == 0:
            break
        x = y / ny
    return float(x @ B @ x), x


def symmetric_eigenvalues(M, **kwargs):
    """All eigenvalues of symmetric ``M`` (descending) by shifted power iteration
    with Hotelling deflation."""
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    n = M.shape[0]
    shift = np.linalg.norm(M)  # Frobenius norm bounds the spectral radius
    B = M + shift * np.eye(n)
    values = []
    for k in range(n):
        lam, v = power_iteration(B, seed=k, **kwargs)
        values.append(lam - shift)
        B = B - lam * np.outer(v, v)
        B = 0.5 * (B + B.T)
    return np.array(sorted(values, reverse=True))


def largest_eigenvalue(M, **kwargs):
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    shift = np.linalg.norm(M)
    lam, v = power_iteration(M + shift * np.eye(M.shape[0]), **kwargs)
    return lam - shift, v


def jacobi_svd(A, tol=1e-15, max_sweeps=100):
    """One-sided (Hestenes) Jacobi SVD: ``A = U @ diag(s) @ Vt`` with ``s`` descending."""
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if m < n:
        U, s, Vt = jacobi_svd(A.T, tol, max_sweeps)
        return Vt.T, s, U.T
    U = A.copy()
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = U[:, i] @ U[:, i]
                beta = U[:, j] @ U[:, j]
                gamma = U[:, i] @ U[:, j]
                if abs(gamma) <= tol * np.sqrt(alpha * beta) or gamma == 0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta)) if zeta else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                ui, uj = U[:, i].copy(), U[:, j].copy()
                U[:, i], U[:, j] = c * ui - s * uj, s * ui + c * uj
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i], V[:, j] = c * vi - s * vj, s * vi + c * vj
        if not rotated:
            break
    sv = np.linalg.norm(U, axis=0)
    order = np.argsort(-sv)
    sv, U, V = sv[order], U[:, order], V[:, order]
    nz = sv > 0
    U[:, nz] = U[:, nz] / sv[nz]
    return U, sv, V.T


def procrustes_solution(C, rotation_only=False):
    """Maximizer of ``trace(W^T C)`` over orthogonal (or rotation) matrices."""
    U, _, Vt = jacobi_svd(C)
    if rotation_only and np.linalg.det(U) * np.linalg.det(Vt) < 0:
        U = U.copy()
        U[:, -1] = -U[:, -1]  # smallest singular value absorbs the reflection
    return U @ Vt


def _unit_columns(Z):
    n = np.linalg.norm(Z, axis=0)
    return Z / n, n


def multistart_oblique(objective, gradient, rows, cols, restarts=100, seed=0):
    """Best local minimum over random restarts, with columns parametrized as
    ``z / ||z||`` and BFGS on the unconstrained ``z``."""
    rng = np.random.default_rng(seed)
    best_val, best_point = np.inf, None

    def fun(z):
        Z = z.reshape(rows, cols)
        W, nrm = _unit_columns(Z)
        G = gradient(W)
        # chain rule through column normalization
        dZ = (G - W * np.sum(W * G, axis=0)) / nrm
        return objective(W), dZ.ravel()

    for _ in range(restarts):
        z0 = rng.standard_normal(rows * cols)
        res = minimize(fun, z0, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
        val = objective(_unit_columns(res.x.reshape(rows, cols))[0])
        if val < best_val:
            best_val, best_point = val, _unit_columns(res.x.reshape(rows, cols))[0]
    return float(best_val), best_point


def multistart_stiefel(objective, rows, cols, restarts=100, seed=0):
    """Best local minimum over random restarts, parametrizing orthonormal frames as
    the first ``cols`` columns of ``expm(S) @ Q0`` with ``S`` skew-symmetric."""
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(rows, 1)

    def frame(s, Q0):
        S = np.zeros((rows, rows))
        S[iu] = s
        S = S - S.T
        return (expm(S) @ Q0)[:, :cols]

    best_val, best_point = np.inf, None
    for _ in range(restarts):
        Q0, _ = np.linalg.qr(rng.standard_normal((rows, rows)))
        res = minimize(lambda s: objective(frame(s, Q0)), np.zeros(len(iu[0])), method="BFGS",
                       options={"gtol": 1e-10})
        W = frame(res.x, Q0)
        val = objective(W)
        if val < best_val:
            best_val, best_point = val, W
    return float(best_val), best_point
