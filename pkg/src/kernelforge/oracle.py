"""Brute-force dual QP solver used to check SMO on tiny problems.

Accelerated projected gradient over {0 <= a <= C, y^T a = 0} with an exact
projection, followed by an active-set polish of the free variables. Slow,
simple and independent of the SMO code path.
"""
import numpy as np

MAX_N = 12


def _project(v, y, C):
    """Euclidean projection onto the box intersected with y^T a = 0."""
    breaks = np.unique(np.concatenate([v * y, (v - C) * y]))
    vals = np.clip(v[None, :] - breaks[:, None] * y[None, :], 0.0, C) @ y
    # vals is non-increasing and piecewise linear in the multiplier
    if vals[0] <= 0:
        lam = breaks[0]
    elif vals[-1] >= 0:
        lam = breaks[-1]
    else:
        k = int(np.argmax(vals <= 0))
        lo, hi = breaks[k - 1], breaks[k]
        flo, fhi = vals[k - 1], vals[k]
        lam = lo + (hi - lo) * flo / (flo - fhi)
    return np.clip(v - lam * y, 0.0, C)


def _objective(Q, p, a):
    return 0.5 * a @ Q @ a + p @ a


def _optimality_gap(Q, p, y, C, a, tol=1e-12):
    g = Q @ a + p
    s = -y * g
    up = ((y > 0) & (a < C - tol)) | ((y < 0) & (a > tol))
    low = ((y > 0) & (a > tol)) | ((y < 0) & (a < C - tol))
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, s[up].max() - s[low].min())


def _polish(Q, p, y, C, a, tol=1e-9):
    """Solve the equality-constrained system on the guessed free set."""
    free = (a > tol) & (a < C - tol)
    b = np.where(a >= C - tol, C, 0.0)
    b[free] = 0.0
    f = np.flatnonzero(free)
    if f.size == 0:
        return b if abs(y @ b) < 1e-12 else None
    nf = f.size
    A = np.zeros((nf + 1, nf + 1))
    A[:nf, :nf] = Q[np.ix_(f, f)]
    A[:nf, nf] = y[f]
    A[nf, :nf] = y[f]
    rhs = np.concatenate([-(p[f] + Q[f] @ b), [-(y @ b)]])
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    cand = b.copy()
    cand[f] = sol[:nf]
    if np.any(cand < -1e-10) or np.any(cand > C + 1e-10):
        return None
    return np.clip(cand, 0.0, C)


def solve_boxed_qp(Q, p, y, C, max_iter=100_000, stationarity=1e-8):
    """Minimize 1/2 a^T Q a + p^T a over the SVM dual feasible set."""
    Q = 0.5 * (Q + Q.T)
    L = max(np.linalg.eigvalsh(Q)[-1], 1e-12)
    a = np.zeros_like(p)
    z = a.copy()
    t = 1.0
    f_prev = _objective(Q, p, a)
    best, f_best = a, f_prev
    for it in range(max_iter):
        a_new = _project(z - (Q @ z + p) / L, y, C)
        f_new = _objective(Q, p, a_new)
        if f_new > f_prev:
            # adaptive restart
            z, t = a.copy(), 1.0
            continue
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = a_new + ((t - 1) / t_new) * (a_new - a)
        a, t, f_prev = a_new, t_new, f_new
        if it % 25 == 0:
            cand = _polish(Q, p, y, C, a)
            if cand is not None and _optimality_gap(Q, p, y, C, cand) < stationarity:
                f_cand = _objective(Q, p, cand)
                if f_cand <= f_prev + 1e-12:
                    return cand, f_cand
        step = a - _project(a - (Q @ a + p) / L, y, C)
        if L * np.linalg.norm(step) < stationarity:
            break
    best, f_best = a, f_prev
    cand = _polish(Q, p, y, C, a)
    if cand is not None and _objective(Q, p, cand) < f_best:
        best, f_best = cand, _objective(Q, p, cand)
    return best, f_best


def qp_oracle_dual(gram, targets, cfg, *, kind="svc"):
    """Optimal dual objective (maximization form) of a small SVC/SVR problem.

    For ``kind="svc"`` ``targets`` are +-1 labels; for ``kind="svr"`` they
    are real regression targets and ``cfg.epsilon_tube`` is the tube
    half-width. Only ``cfg.c`` and ``cfg.epsilon_tube`` are read.
    """
    c, epsilon = cfg.c, cfg.epsilon_tube
    K = np.asarray(gram, dtype=float)
    z = np.asarray(targets, dtype=float)
    n = z.size
    if n > MAX_N:
        raise ValueError(f"oracle handles at most {MAX_N} points, got {n}")
    if K.shape != (n, n):
        raise ValueError("gram must be n x n")
    if kind == "svc":
        if not np.all(np.abs(z) == 1):
            raise ValueError("labels must be -1 or +1")
        if np.unique(z).size < 2:
            raise ValueError("oracle needs both classes")
        Q = np.outer(z, z) * K
        _, f = solve_boxed_qp(Q, -np.ones(n), z, c)
    elif kind == "svr":
        y = np.concatenate([np.ones(n), -np.ones(n)])
        Kb = np.block([[K, K], [K, K]])
        Q = np.outer(y, y) * Kb
        p = np.concatenate([epsilon - z, epsilon + z])
        _, f = solve_boxed_qp(Q, p, y, c)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return -f
