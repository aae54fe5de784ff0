"""Compiled inner loops: IRLS and the move scan of the local search.

Family codes: 0 gaussian, 1 binomial, 2 poisson. IRLS status codes are
listed below; :func:`hiersel.glm.irls` turns them into results or
exceptions.
"""

import math

import numpy as np
from numba import njit

GAUSSIAN, BINOMIAL, POISSON = 0, 1, 2

CONVERGED = 0
MAX_ITER = 1
HALVING_EXHAUSTED = 2
SINGULAR = 3
BOUNDED = 4  # stopped: the likelihood provably stays below the floor

ETA_CLAMP = 30.0
MAX_HALVINGS = 10
PIVOT_RATIO = 1e-10


@njit(cache=True)
def _softplus(e):
    if e > 0:
        return e + math.log1p(math.exp(-e))
    return math.log1p(math.exp(e))


@njit(cache=True)
def _loglik_kernel(kind, y, m, eta):
    """sum(y * eta - b(eta)) at phi = 1."""
    s = 0.0
    for i in range(y.shape[0]):
        e = eta[i]
        if kind == BINOMIAL:
            s += y[i] * e - m[i] * _softplus(e)
        elif kind == POISSON:
            s += y[i] * e - math.exp(e)
        else:
            s += y[i] * e - 0.5 * e * e
    return s


# Largest |eta| a recorded fit may have. Beyond it fitted means are
# numerically on the boundary (separation: the likelihood only approaches
# its supremum at infinity) and the fit counts as failed. The bound also
# caps the clipping slack below.
ETA_BOUND = 100.0


@njit(cache=True)
def _conjugate_bound(kind, m, cur):
    """Sum of ``b*`` over ``cur`` clipped to the closed mean domain, plus slack.

    ``b*`` is finite on ``[0, m]`` (binomial) or ``[0, inf)`` (poisson).
    Clipping row ``i`` by ``d_i`` breaks the score equations there, which
    can raise the bound by at most ``|d_i| * |eta_i|``; that is added with
    ``|eta_i| <= ETA_BOUND``.
    """
    s = 0.0
    slack = 0.0
    for i in range(cur.shape[0]):
        v = cur[i]
        if v < 0.0:
            slack += -v
            v = 0.0
        elif kind == BINOMIAL and v > m[i]:
            slack += v - m[i]
            v = m[i]
        s += _conjugate(kind, m[i], v)
    return s + ETA_BOUND * slack


@njit(cache=True)
def _conjugate(kind, mi, v):
    # b*(v), with 0 log 0 = 0
    if kind == BINOMIAL:
        out = 0.0
        if v > 0.0:
            out += v * math.log(v / mi)
        if mi - v > 0.0:
            out += (mi - v) * math.log((mi - v) / mi)
        return out
    return (v * math.log(v) if v > 0.0 else 0.0) - v


REPAIR_STEPS = 2


@njit(cache=True)
def _enlargement_bound(kind, m, mu, w, shift, Xa, C, L, AinvB, S):
    """Conjugate bound at a mean vector meeting the enlarged score equations.

    Starts from the Newton point ``mu + w * shift``. Rows that leave the mean
    domain are pulled back inside and the part of that correction that would
    break the score equations is removed with the weighted projection onto
    the enlarged design (``L`` and ``S`` factor its Gram matrix blockwise).
    Every iterate is a valid bound; the smallest is returned.
    """
    n = mu.shape[0]
    cur = mu + w * shift
    best = _conjugate_bound(kind, m, cur)
    for _ in range(REPAIR_STEPS):
        tau = np.zeros(n)
        bad = False
        for i in range(n):
            if cur[i] < 0.0:
                tau[i] = 0.5 * mu[i] - cur[i]
                bad = True
            elif kind == BINOMIAL and cur[i] > m[i]:
                tau[i] = m[i] - 0.5 * (m[i] - mu[i]) - cur[i]
                bad = True
        if not bad:
            break
        va = Xa.T @ tau
        yc = _chol_solve(S, C.T @ tau - AinvB.T @ va)
        ya = _chol_solve(L, va) - AinvB @ yc
        cur = cur + tau - w * (Xa @ ya + C @ yc)
        best = min(best, _conjugate_bound(kind, m, cur))
    return best


@njit(cache=True)
def _removal_bound(kind, m, mu, w, h0, dirn):
    """Smallest conjugate bound over ``mu + w * (h0 - t * dirn)``, ``t`` in (0, 1].

    Every ``t`` keeps the smaller model's score equations. ``t`` is capped
    where a mean would leave its domain; the cap and half of it are tried.
    """
    n = mu.shape[0]
    base = mu + w * h0
    tmax = 1.0
    for i in range(n):
        step = w[i] * dirn[i]
        if step > 0.0 and base[i] > 0.0:
            tmax = min(tmax, base[i] / step)
        elif step < 0.0 and kind == BINOMIAL and base[i] < m[i]:
            tmax = min(tmax, (m[i] - base[i]) / -step)
    if tmax < 1.0:
        tmax *= 0.999
    best = np.inf
    t = tmax
    for _ in range(2):
        best = min(best, _conjugate_bound(kind, m, base - t * w * dirn))
        t *= 0.5
    return best


@njit(cache=True)
def _cholesky(A):
    """Lower factor in place (LAPACK); False unless every squared pivot exceeds
    ``PIVOT_RATIO`` times the largest."""
    try:
        L = np.linalg.cholesky(A)
    except Exception:
        return False
    q = A.shape[0]
    big = 0.0
    for j in range(q):
        big = max(big, L[j, j] * L[j, j])
    for j in range(q):
        d = L[j, j] * L[j, j]
        if not d > 0.0 or d < PIVOT_RATIO * big:
            return False
    A[:, :] = L
    return True


@njit(cache=True)
def _chol_solve(L, b):
    q = L.shape[0]
    x = b.copy()
    for i in range(q):
        s = x[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    for i in range(q - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, q):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def irls_kernel(X, y, m, kind, eta0, coef0, warm, sat, tol, max_iter, floor):
    """Canonical-link IRLS on the full design ``X``.

    ``warm`` means ``coef0`` is a valid iterate with ``eta0 = X @ coef0``;
    it then takes part in step halving.

    Each weighted least-squares solve also yields a mean vector
    ``mu + w * (X new - eta)`` that meets the score equations exactly, so
    its conjugate sum bounds the maximal kernel log-likelihood. Once that
    bound drops below ``floor`` the fit stops with status ``BOUNDED``.

    Returns ``(coef, eta, deviance, status, iterations, trace, bound)``.
    """
    n, q = X.shape
    trace = np.empty(max_iter)
    coef = coef0.copy()
    eta = eta0.copy()
    mu = np.empty(n)
    w = np.empty(n)
    z = np.empty(n)
    ec = np.empty(n)
    bound = np.inf

    if kind == GAUSSIAN:
        A = X.T @ X
        if not _cholesky(A):
            return coef, eta, np.inf, SINGULAR, 0, trace[:0], bound
        coef = _chol_solve(A, X.T @ y)
        eta = X @ coef
        dev = 0.0
        for i in range(n):
            dev += (y[i] - eta[i]) ** 2
        trace[0] = dev
        return coef, eta, dev, CONVERGED, 1, trace[:1], bound

    dev_old = np.inf
    if warm:
        dev_old = max(2.0 * (sat - _loglik_kernel(kind, y, m, eta)), 0.0)
    have_prev = warm
    for it in range(max_iter):
        for i in range(n):
            e = min(max(eta[i], -ETA_CLAMP), ETA_CLAMP)
            if kind == BINOMIAL:
                p = 1.0 / (1.0 + math.exp(-e))
                mu[i] = m[i] * p
                w[i] = max(m[i] * p * (1.0 - p), 1e-300)
            else:
                mu[i] = math.exp(e)
                w[i] = max(mu[i], 1e-300)
            ec[i] = e
            z[i] = e + (y[i] - mu[i]) / w[i]
        Xw = X * w.reshape((n, 1))
        A = X.T @ Xw
        if not _cholesky(A):
            return coef, eta, dev_old, SINGULAR, it, trace[:it], bound
        new = _chol_solve(A, Xw.T @ z)

        eta_new = X @ new
        if floor > -np.inf:
            bound = min(bound, _conjugate_bound(kind, m, mu + w * (eta_new - ec)))
            if bound < floor:
                return coef, eta, dev_old, BOUNDED, it + 1, trace[:it], bound
        dev = max(2.0 * (sat - _loglik_kernel(kind, y, m, eta_new)), 0.0)
        halvings = 0
        while have_prev and (not np.isfinite(dev) or dev > dev_old * (1 + 1e-12) + 1e-12):
            if halvings == MAX_HALVINGS:
                return coef, eta, dev_old, HALVING_EXHAUSTED, it + 1, trace[:it], bound
            new = 0.5 * (new + coef)
            eta_new = X @ new
            dev = max(2.0 * (sat - _loglik_kernel(kind, y, m, eta_new)), 0.0)
            halvings += 1
        coef = new
        eta = eta_new
        have_prev = True
        trace[it] = dev
        if abs(dev_old - dev) / (abs(dev) + 0.1) < tol:
            return coef, eta, dev, CONVERGED, it + 1, trace[:it + 1], bound
        dev_old = dev
    return coef, eta, dev_old, MAX_ITER, max_iter, trace, bound


@njit(cache=True)
def prepare_state(Xa, y, m, kind, coef):
    """Quantities shared by every enlargement of a fitted model.

    Returns ``(mu, w, L, a0, h0)``: means and weights at the fit, the
    Cholesky factor of ``Xa' W Xa``, ``a0`` solving
    ``(Xa' W Xa) a0 = Xa' (y - mu)`` and ``h0 = Xa a0``. ``L`` is empty when
    the Gram matrix is numerically singular.
    """
    n, q = Xa.shape
    eta = Xa @ coef
    mu = np.empty(n)
    w = np.empty(n)
    for i in range(n):
        if kind == GAUSSIAN:
            mu[i] = eta[i]
            w[i] = 1.0
            continue
        e = min(max(eta[i], -ETA_CLAMP), ETA_CLAMP)
        if kind == BINOMIAL:
            p = 1.0 / (1.0 + math.exp(-e))
            mu[i] = m[i] * p
            w[i] = max(m[i] * p * (1.0 - p), 1e-300)
        else:
            mu[i] = math.exp(e)
            w[i] = max(mu[i], 1e-300)
    WXa = Xa * w.reshape((n, 1))
    L = Xa.T @ WXa
    if not _cholesky(L):
        return mu, w, np.empty((0, 0)), np.zeros(q), np.zeros(n)
    a0 = _chol_solve(L, Xa.T @ (y - mu))
    return mu, w, L, a0, Xa @ a0


@njit(cache=True)
def _gain_bound(kind, m, mu, w, shift, base, ll_old, n, nu, rss):
    """Upper bound on the log-likelihood change of a neighbor (exact for gaussian).

    For binomial and poisson ``mu + w * shift`` must satisfy the neighbor's
    score equations; the conjugate sum there bounds its maximum. For
    gaussian ``rss`` is the neighbor's exact RSS and ``nu`` its residual
    degrees of freedom.
    """
    if kind == GAUSSIAN:
        phi = max(rss / nu, 1e-300)
        return -0.5 * nu - 0.5 * n * math.log(2.0 * math.pi * phi) - ll_old
    return _conjugate_bound(kind, m, mu + w * shift) - base


@njit(cache=True)
def scan_moves(X, y, m, kind, Xa, coef, mu, w, L, a0, h0, base, main_pos, pair_pos, pj, pk,
               size, max_size, step, margin, js, ks, start):
    """Skip elements whose move provably does not improve the objective.

    Walks ``(js[t], ks[t])`` from ``start`` (``ks[t] < 0`` marks a main)
    and returns the first position whose move needs a real fit: its bound
    on the penalized gain reaches ``-margin``, or no bound is available.
    Moves beyond ``max_size`` are skipped. ``main_pos`` and ``pair_pos``
    give the design column of each current term (``-1`` when absent);
    ``pj, pk`` list the current interactions.

    Enlargement: one Newton step of the enlarged model from the current
    fit, solved by block elimination against ``L``, gives a mean vector
    satisfying the enlarged score equations. Removal: the current means
    (corrected for the residual score) satisfy the smaller score
    equations, and one Newton step of the dual towards the smaller model
    keeps them satisfied. In both cases the conjugate of the cumulant
    summed at that mean vector bounds the neighbor's maximized
    log-likelihood (convex duality); ``base`` is the current value without
    its constant. For gaussian the same algebra is exact; ``base`` is then
    the current RSS and the log-likelihood is profiled with
    ``phi = RSS / (n - df)``.
    """
    n = X.shape[0]
    q = Xa.shape[1]
    if L.shape[0] != q:
        return start
    r = y - mu
    cols = np.empty(3, dtype=np.int64)
    ga = (Xa.T @ r) @ a0
    rss0 = base - ga
    ll_old = 0.0
    if kind == GAUSSIAN:
        nu0 = n - q
        ll_old = -0.5 * nu0 - 0.5 * n * math.log(2.0 * math.pi * max(base / nu0, 1e-300))
    rem = np.empty(q, dtype=np.int64)
    for t in range(start, js.shape[0]):
        j = js[t]
        k = ks[t]
        present = main_pos[j] >= 0 if k < 0 else pair_pos[j, k] >= 0
        if present:
            # columns dropped by the removal
            d = 0
            if k < 0:
                rem[0] = main_pos[j]
                d = 1
                for e in range(pj.shape[0]):
                    if pj[e] == j or pk[e] == j:
                        rem[d] = pair_pos[pj[e], pk[e]]
                        d += 1
            else:
                rem[0] = pair_pos[j, k]
                d = 1
            G = np.empty((q, d))
            for c in range(d):
                e_c = np.zeros(q)
                e_c[rem[c]] = 1.0
                G[:, c] = _chol_solve(L, e_c)
            Gcc = np.empty((d, d))
            bc = np.empty(d)
            for a in range(d):
                bc[a] = coef[rem[a]]
                for b in range(d):
                    Gcc[a, b] = G[rem[a], b]
            if not _cholesky(Gcc):
                return t
            zc = _chol_solve(Gcc, bc)
            wald = bc @ zc
            if kind == GAUSSIAN:
                bound = _gain_bound(kind, m, mu, w, h0, base, ll_old, n, n - q + d, rss0 + wald)
            else:
                bound = _removal_bound(kind, m, mu, w, h0, Xa @ (G @ zc)) - base
                if np.isnan(bound):
                    return t
            if bound + step * d >= -margin:
                return t
            continue

        d = 0
        if k < 0:
            cols[0] = j
            d = 1
        else:
            if main_pos[j] < 0:
                cols[d] = j
                d += 1
            if main_pos[k] < 0:
                cols[d] = k
                d += 1
            cols[d] = -1
            d += 1
        if size + d > max_size:
            continue
        C = np.empty((n, d))
        WC = np.empty((n, d))
        for i in range(n):
            for c in range(d):
                if cols[c] >= 0:
                    v = X[i, cols[c]]
                else:
                    v = X[i, j] * X[i, k]
                C[i, c] = v
                WC[i, c] = w[i] * v
        B = Xa.T @ WC
        AinvB = _chol_solve_mat(L, B)
        S = C.T @ WC - B.T @ AinvB
        u = C.T @ r - B.T @ a0
        if not _cholesky(S):
            return t
        gc = _chol_solve(S, u)
        if kind == GAUSSIAN:
            if n - q - d <= 0:
                return t
            bound = _gain_bound(kind, m, mu, w, h0, base, ll_old, n, n - q - d, rss0 - u @ gc)
        else:
            shift = h0 + C @ gc - Xa @ (AinvB @ gc)
            bound = _enlargement_bound(kind, m, mu, w, shift, Xa, C, L, AinvB, S) - base
            if np.isnan(bound):
                return t
        if bound - step * d >= -margin:
            return t
    return js.shape[0]


@njit(cache=True)
def _chol_solve_mat(L, B):
    out = np.empty_like(B)
    for c in range(B.shape[1]):
        out[:, c] = _chol_solve(L, np.ascontiguousarray(B[:, c]))
    return out
