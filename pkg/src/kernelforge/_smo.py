"""Compiled SMO inner loop shared by C-SVC and epsilon-SVR.

Both problems are written in the generic boxed form

    min_a  1/2 a^T Q a + p^T a   s.t.  y^T a = 0,  0 <= a_t <= C_t

with ``Q[t, s] = y[t] * y[s] * K[idx[t], idx[s]]``. ``idx`` maps each dual
variable to a row of the Gram matrix, so the 2n variables of a regression
problem can share an n x n Gram. The per-variable bound ``C_t`` lets a
single variable stand for several identical training rows.
"""
import numpy as np
from numba import njit

TAU = 1e-12


@njit(cache=True, nogil=True)
def solve(K, idx, y, p, C, tol, max_iter, record, alpha0):
    """SMO from the feasible start ``alpha0`` (zeros for a cold start)."""
    l = y.shape[0]
    alpha = alpha0.copy()
    G = gradient(K, idx, y, p, alpha)
    qd = np.empty(l)
    for t in range(l):
        qd[t] = K[idx[t], idx[t]]
    history = np.empty(max_iter if record else 0)
    it = 0
    converged = False
    while it < max_iter:
        # i: maximal violator in the "up" set
        gmax = -np.inf
        i = -1
        for t in range(l):
            if y[t] > 0:
                if alpha[t] < C[t] and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        # j: second-order choice in the "low" set
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        if i != -1:
            ki = idx[i]
            for t in range(l):
                if y[t] > 0:
                    if alpha[t] > 0:
                        if G[t] >= gmax2:
                            gmax2 = G[t]
                        diff = gmax + G[t]
                        if diff > 0:
                            quad = qd[i] + qd[t] - 2.0 * K[ki, idx[t]]
                            if quad <= 0:
                                quad = TAU
                            val = -(diff * diff) / quad
                            if val <= obj_min:
                                j = t
                                obj_min = val
                else:
                    if alpha[t] < C[t]:
                        if -G[t] >= gmax2:
                            gmax2 = -G[t]
                        diff = gmax - G[t]
                        if diff > 0:
                            quad = qd[i] + qd[t] - 2.0 * K[ki, idx[t]]
                            if quad <= 0:
                                quad = TAU
                            val = -(diff * diff) / quad
                            if val <= obj_min:
                                j = t
                                obj_min = val
        if gmax + gmax2 < tol or j == -1:
            converged = True
            break

        kij = K[idx[i], idx[j]]
        old_ai = alpha[i]
        old_aj = alpha[j]
        Ci = C[i]
        Cj = C[j]
        if y[i] != y[j]:
            quad = qd[i] + qd[j] + 2.0 * (y[i] * y[j] * kij)
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > Ci - Cj:
                if alpha[i] > Ci:
                    alpha[i] = Ci
                    alpha[j] = Ci - diff
            else:
                if alpha[j] > Cj:
                    alpha[j] = Cj
                    alpha[i] = Cj + diff
        else:
            quad = qd[i] + qd[j] - 2.0 * (y[i] * y[j] * kij)
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > Ci:
                if alpha[i] > Ci:
                    alpha[i] = Ci
                    alpha[j] = total - Ci
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > Cj:
                if alpha[j] > Cj:
                    alpha[j] = Cj
                    alpha[i] = total - Cj
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        dai = alpha[i] - old_ai
        daj = alpha[j] - old_aj
        ki = idx[i]
        kj = idx[j]
        yi = y[i]
        yj = y[j]
        for t in range(l):
            kt = idx[t]
            G[t] += y[t] * (yi * K[ki, kt] * dai + yj * K[kj, kt] * daj)
        if record:
            f = 0.0
            for t in range(l):
                f += alpha[t] * (G[t] + p[t])
            history[it] = -0.5 * f
        it += 1
    return alpha, G, it, converged, history[:it]


@njit(cache=True, nogil=True)
def gradient(K, idx, y, p, alpha):
    l = y.shape[0]
    G = p.copy()
    for s in range(l):
        if alpha[s] != 0.0:
            ks = idx[s]
            for t in range(l):
                G[t] += y[t] * y[s] * K[ks, idx[t]] * alpha[s]
    return G


def bias_terms(alpha, G, y, C):
    """Return rho such that the decision value is ``sum(...) - rho``.

    Free variables each pin rho exactly; their mean is used. Without free
    variables rho lies in the feasible interval left by the bounded ones and
    its midpoint is taken.
    """
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(yG[free].mean())
    up = (at_upper & (y < 0)) | (at_lower & (y > 0))
    low = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[up].min() if up.any() else np.inf
    lb = yG[low].max() if low.any() else -np.inf
    if np.isinf(ub) or np.isinf(lb):
        return float(ub if np.isfinite(ub) else lb)
    return float((ub + lb) / 2)


def kkt_gap(alpha, G, y, C):
    """Maximal KKT violation m(a) - M(a), clipped at zero."""
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    score = -y * G
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, float(score[up].max() - score[low].min()))
