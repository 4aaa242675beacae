"""Pure numpy kernels for affine games.

Same signatures as the compiled ``_kernels`` module.  Stacks are ``(N, n)``
arrays; ``owner[j]`` is the agent controlling coordinate ``j``.
"""
import numpy as np

ALG1, ALG2, UNCONSTRAINED = 0, 1, 2
MAX_ITERS, CONVERGED, DIVERGED = 0, 1, 2


def _own_gradient(X, G, c, owner):
    return np.einsum("jk,jk->j", G, X[owner]) + c


def alg1_step(W, X, G, c, owner, lo, hi, alpha):
    Xh = W @ X
    cols = np.arange(X.shape[1])
    g = _own_gradient(Xh, G, c, owner)
    out = Xh
    out[owner, cols] = np.clip(Xh[owner, cols] - alpha * g, lo, hi)
    return out


def alg2_step(W, X, G, c, owner, lo, hi, gamma, tau):
    Lx = W.sum(axis=1)[:, None] * X - W @ X
    cols = np.arange(X.shape[1])
    g = _own_gradient(X, G, c, owner)
    out = X - tau * Lx
    out[owner, cols] = np.clip(X[owner, cols] - tau * (gamma * g + Lx[owner, cols]), lo, hi)
    return out


def unconstrained_step(W, X, G, c, owner, alpha):
    out = W @ X
    cols = np.arange(X.shape[1])
    out[owner, cols] -= alpha * _own_gradient(X, G, c, owner)
    return out


def stack_metrics(X, xstar, owner):
    cols = np.arange(X.shape[1])
    dist = np.sqrt(np.sum((X - xstar) ** 2))
    action = np.sqrt(np.sum((X[owner, cols] - xstar) ** 2))
    cons = np.sqrt(np.sum((X - X.mean(axis=0)) ** 2))
    return dist, action, cons


def run_affine(kind, Ws, schedule, X0, G, c, owner, lo, hi, p1, p2, xstar, has_oracle,
               stop_tol, div_limit):
    """Iterate ``len(schedule)`` steps (or until stopping) and record metrics.

    Returns ``(X, dist, action, cons, steps, status)`` where the metric arrays
    have ``steps + 1`` meaningful leading entries (row 0 is the initial point).
    Without an oracle the distance columns hold the step length instead.
    """
    iters = len(schedule)
    X = np.array(X0, dtype=float)
    dist = np.full(iters + 1, np.nan)
    action = np.full(iters + 1, np.nan)
    cons = np.full(iters + 1, np.nan)
    ref = xstar if has_oracle else np.zeros(X.shape[1])
    d, a, s = stack_metrics(X, ref, owner)
    cons[0] = s
    if has_oracle:
        dist[0], action[0] = d, a
        if d <= stop_tol:
            return X, dist, action, cons, 0, CONVERGED
    for k in range(iters):
        W = Ws[schedule[k]]
        if kind == ALG1:
            Xn = alg1_step(W, X, G, c, owner, lo, hi, p1)
        elif kind == ALG2:
            Xn = alg2_step(W, X, G, c, owner, lo, hi, p1, p2)
        else:
            Xn = unconstrained_step(W, X, G, c, owner, p1)
        if has_oracle:
            d, a, s = stack_metrics(Xn, xstar, owner)
        else:
            _, _, s = stack_metrics(Xn, ref, owner)
            d = np.sqrt(np.sum((Xn - X) ** 2))
        X = Xn
        dist[k + 1], cons[k + 1] = d, s
        if has_oracle:
            action[k + 1] = a
        if not np.isfinite(d) or not np.all(np.isfinite(X)) or d > div_limit:
            return X, dist, action, cons, k + 1, DIVERGED
        if d <= stop_tol:
            return X, dist, action, cons, k + 1, CONVERGED
    return X, dist, action, cons, iters, MAX_ITERS
