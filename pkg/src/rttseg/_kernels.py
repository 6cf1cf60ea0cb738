"""Compiled inner loops for the collapsed Gibbs samplers.

State and cluster ids are slots in fixed-capacity arrays; a slot is free when
its occupancy is zero.  Kernels return -1 when done, or the index of the first
step they could not process because a new state/cluster slot was needed and
none was free.  The caller grows the arrays and resumes from that index; all
randomness comes from per-step uniforms supplied by the caller, so resuming
never changes the draws.
"""

import math

import numpy as np
from numba import njit

RULE_EXACT = 0
RULE_SIMPLIFIED = 1


@njit(cache=True)
def t_logpdf(y, df, loc, scale2, lognorm):
    d = y - loc
    return lognorm - 0.5 * (df + 1.0) * math.log1p(d * d / (scale2 * df))


@njit(cache=True)
def t_lognorm(df, scale2):
    return math.lgamma(0.5 * (df + 1.0)) - math.lgamma(0.5 * df) - 0.5 * math.log(df * math.pi * scale2)


@njit(cache=True)
def refresh_cluster(k, c, cn, cs, css, cache, mu0, k0, v0, s0, floor):
    """Recompute the Student-t predictive of cluster (k, c) from its stats."""
    n = cn[k, c]
    if n == 0:
        kn = k0
        vn = v0
        mun = mu0
        sn = s0
    else:
        mean = cs[k, c] / n
        ss = css[k, c] - cs[k, c] * mean
        if ss < 0.0:
            ss = 0.0
        kn = k0 + n
        vn = v0 + n
        mun = (k0 * mu0 + n * mean) / kn
        sn = (v0 * s0 + ss + (n * k0 / kn) * (mean - mu0) ** 2) / vn
        if sn < floor:
            sn = floor
    scale2 = sn * (1.0 + kn) / kn
    cache[k, c, 0] = vn
    cache[k, c, 1] = mun
    cache[k, c, 2] = scale2
    cache[k, c, 3] = t_lognorm(vn, scale2)


@njit(cache=True)
def _logsumexp_into(w, m):
    mx = -np.inf
    for i in range(m):
        if w[i] > mx:
            mx = w[i]
    tot = 0.0
    for i in range(m):
        tot += math.exp(w[i] - mx)
    return mx + math.log(tot)


@njit(cache=True)
def _pick(logw, m, u):
    """Index drawn proportionally to exp(logw[:m]) using the uniform u."""
    mx = -np.inf
    for i in range(m):
        if logw[i] > mx:
            mx = logw[i]
    tot = 0.0
    for i in range(m):
        logw[i] = math.exp(logw[i] - mx)
        tot += logw[i]
    target = u * tot
    acc = 0.0
    for i in range(m):
        acc += logw[i]
        if target < acc:
            return i
    # u*tot rounding at the top end
    for i in range(m - 1, -1, -1):
        if logw[i] > 0.0:
            return i
    return m - 1


@njit(cache=True)
def state_emission_logpred(k, y, cn, cache, ncap_c, nk, alpha_e, prior_t, buf):
    """log p(y | data currently in state k) under the state's DP mixture."""
    if nk == 0:
        return t_logpdf(y, prior_t[0], prior_t[1], prior_t[2], prior_t[3])
    m = 0
    for c in range(ncap_c):
        n = cn[k, c]
        if n > 0:
            buf[m] = math.log(n) + t_logpdf(y, cache[k, c, 0], cache[k, c, 1], cache[k, c, 2], cache[k, c, 3])
            m += 1
    buf[m] = math.log(alpha_e) + t_logpdf(y, prior_t[0], prior_t[1], prior_t[2], prior_t[3])
    m += 1
    return _logsumexp_into(buf, m) - math.log(nk + alpha_e)


@njit(cache=True)
def transition_logweights(prev, nxt, live, N, nrow, beta, beta_rem, alpha, kappa, rule, out):
    """Unnormalized log prior weights of z_t over live states, then the new state.

    ``N`` and ``nrow`` must exclude the transitions into and out of step t.
    ``prev``/``nxt`` are -1 at the series boundaries.  Returns the number of
    entries written; the last one is the new-state weight.
    """
    m = 0
    ak = alpha + kappa
    for k in range(live.size):
        if not live[k]:
            continue
        if prev < 0:
            inc = beta[k]
        else:
            sp = 1.0 if prev == k else 0.0
            inc = (alpha * beta[k] + N[prev, k] + kappa * sp) / (ak + nrow[prev])
        if nxt < 0:
            out_ = 1.0
        else:
            sp = 1.0 if prev == k else 0.0
            sn = 1.0 if k == nxt else 0.0
            if rule == RULE_EXACT:
                num = alpha * beta[nxt] + N[k, nxt] + kappa * sn + sp * sn
            else:
                num = alpha * beta[nxt] + N[k, nxt] + kappa * sp * sn
            out_ = num / (ak + nrow[k] + sp)
        out[m] = math.log(inc) + math.log(out_) if inc > 0.0 and out_ > 0.0 else -np.inf
        m += 1
    # new state
    if prev < 0:
        inc = beta_rem
    elif rule == RULE_EXACT:
        inc = alpha * beta_rem / (ak + nrow[prev])
    else:
        inc = alpha * beta_rem / ak
    if nxt < 0:
        out_ = 1.0
    else:
        out_ = alpha * beta[nxt] / ak
    out[m] = math.log(inc) + math.log(out_) if inc > 0.0 and out_ > 0.0 else -np.inf
    return m + 1


@njit(cache=True)
def _remove_obs(k, c, yv, cn, cs, css, cache, prior, floor):
    cn[k, c] -= 1
    cs[k, c] -= yv
    css[k, c] -= yv * yv
    if cn[k, c] == 0:
        cs[k, c] = 0.0
        css[k, c] = 0.0
    refresh_cluster(k, c, cn, cs, css, cache, prior[0], prior[1], prior[2], prior[3], floor)


@njit(cache=True)
def _add_obs(k, c, yv, cn, cs, css, cache, prior, floor):
    cn[k, c] += 1
    cs[k, c] += yv
    css[k, c] += yv * yv
    refresh_cluster(k, c, cn, cs, css, cache, prior[0], prior[1], prior[2], prior[3], floor)


@njit(cache=True)
def _pick_cluster(k, yv, cn, cache, ncap_c, alpha_e, prior_t, u, buf, ids):
    m = 0
    free = -1
    for c in range(ncap_c):
        n = cn[k, c]
        if n > 0:
            buf[m] = math.log(n) + t_logpdf(yv, cache[k, c, 0], cache[k, c, 1], cache[k, c, 2], cache[k, c, 3])
            ids[m] = c
            m += 1
        elif free < 0:
            free = c
    buf[m] = math.log(alpha_e) + t_logpdf(yv, prior_t[0], prior_t[1], prior_t[2], prior_t[3])
    ids[m] = free
    m += 1
    return ids[_pick(buf, m, u)]


@njit(cache=True)
def sweep_clusters(y, obs, z, cz, cn, cs, css, nobs, cache, prior, prior_t, alpha_e, floor, u, t0):
    """Resample every present observation's cluster within its current state."""
    T = y.size
    ncap_c = cn.shape[1]
    buf = np.empty(ncap_c + 1)
    ids = np.empty(ncap_c + 1, dtype=np.int64)
    for t in range(t0, T):
        if not obs[t]:
            continue
        k = z[t]
        c = cz[t]
        _remove_obs(k, c, y[t], cn, cs, css, cache, prior, floor)
        nobs[k] -= 1
        full = True
        for cc in range(ncap_c):
            if cn[k, cc] == 0:
                full = False
                break
        if full:
            _add_obs(k, c, y[t], cn, cs, css, cache, prior, floor)
            nobs[k] += 1
            return t
        c = _pick_cluster(k, y[t], cn, cache, ncap_c, alpha_e, prior_t, u[t], buf, ids)
        _add_obs(k, c, y[t], cn, cs, css, cache, prior, floor)
        nobs[k] += 1
        cz[t] = c
    return -1


@njit(cache=True)
def sweep_states(y, obs, z, cz, N, nrow, occ, beta, beta_rem, cn, cs, css, nobs, cache,
                 prior, prior_t, alpha, kappa, gamma, alpha_e, rule, floor,
                 u_state, u_clust, u_stick, t0, t1):
    """One pass of single-site updates of (z_t, cluster_t) for t0 <= t < t1.

    ``beta_rem`` is a length-1 array so the caller sees the updated value.
    """
    T = y.size
    kcap = occ.size
    ncap_c = cn.shape[1]
    live = occ > 0
    logw = np.empty(kcap + 1)
    slot = np.empty(kcap + 1, dtype=np.int64)
    buf = np.empty(ncap_c + 1)
    ids = np.empty(ncap_c + 1, dtype=np.int64)
    for t in range(t0, t1):
        # capacity check before touching anything at step t
        nlive = 0
        for k in range(kcap):
            if occ[k] > 0:
                nlive += 1
        if nlive >= kcap:
            return t
        for k in range(kcap):
            if occ[k] > 0 and cn.shape[1] > 0:
                full = True
                for c in range(ncap_c):
                    if cn[k, c] == 0:
                        full = False
                        break
                if full:
                    return t

        k_old = z[t]
        prev = z[t - 1] if t > 0 else -1
        nxt = z[t + 1] if t < T - 1 else -1
        if prev >= 0:
            N[prev, k_old] -= 1
            nrow[prev] -= 1
        if nxt >= 0:
            N[k_old, nxt] -= 1
            nrow[k_old] -= 1
        occ[k_old] -= 1
        if obs[t]:
            _remove_obs(k_old, cz[t], y[t], cn, cs, css, cache, prior, floor)
            nobs[k_old] -= 1
        if occ[k_old] == 0:
            live[k_old] = False
            beta_rem[0] += beta[k_old]
            beta[k_old] = 0.0

        m = transition_logweights(prev, nxt, live, N, nrow, beta, beta_rem[0], alpha, kappa, rule, logw)
        j = 0
        for k in range(kcap):
            if live[k]:
                slot[j] = k
                if obs[t]:
                    logw[j] += state_emission_logpred(k, y[t], cn, cache, ncap_c, nobs[k], alpha_e, prior_t, buf)
                j += 1
        free = -1
        for k in range(kcap):
            if not live[k]:
                free = k
                break
        slot[j] = free
        if obs[t]:
            logw[j] += t_logpdf(y[t], prior_t[0], prior_t[1], prior_t[2], prior_t[3])
        k_new = slot[_pick(logw, m, u_state[t])]

        if not live[k_new]:
            # split the unallocated stick: Beta(1, gamma) by inversion
            b = 1.0 - (1.0 - u_stick[t]) ** (1.0 / gamma)
            beta[k_new] = b * beta_rem[0]
            beta_rem[0] -= beta[k_new]
            live[k_new] = True
            nrow[k_new] = 0
        z[t] = k_new
        occ[k_new] += 1
        if prev >= 0:
            N[prev, k_new] += 1
            nrow[prev] += 1
        if nxt >= 0:
            N[k_new, nxt] += 1
            nrow[k_new] += 1
        if obs[t]:
            c = _pick_cluster(k_new, y[t], cn, cache, ncap_c, alpha_e, prior_t, u_clust[t], buf, ids)
            _add_obs(k_new, c, y[t], cn, cs, css, cache, prior, floor)
            nobs[k_new] += 1
            cz[t] = c
        else:
            cz[t] = -1
    return -1


@njit(cache=True)
def count_tables(N, beta, alpha, kappa, u):
    """Chinese-restaurant table counts m_jk given customer counts N_jk.

    Customer i (0-based) at dish k in restaurant j opens a new table with
    probability a / (i + a), a = alpha*beta_k + kappa*[j == k].
    """
    K = N.shape[0]
    M = np.zeros((K, K), dtype=np.int64)
    idx = 0
    for j in range(K):
        for k in range(K):
            a = alpha * beta[k] + (kappa if j == k else 0.0)
            cnt = 0
            for i in range(N[j, k]):
                if u[idx] < a / (i + a):
                    cnt += 1
                idx += 1
            M[j, k] = cnt
    return M


@njit(cache=True)
def forward_backward(logB, A, pi0):
    """Scaled forward-backward pass.

    Returns state posteriors (T, K), expected transition counts (K, K) and
    log p(y).  Rows of logB are shifted by their max before exponentiating.
    """
    T, K = logB.shape
    B = np.empty((T, K))
    shift = np.empty(T)
    for t in range(T):
        mx = logB[t, 0]
        for k in range(1, K):
            if logB[t, k] > mx:
                mx = logB[t, k]
        shift[t] = mx
        for k in range(K):
            B[t, k] = math.exp(logB[t, k] - mx)
    fa = np.empty((T, K))
    c = np.empty(T)
    s = 0.0
    for k in range(K):
        fa[0, k] = pi0[k] * B[0, k]
        s += fa[0, k]
    c[0] = s
    for k in range(K):
        fa[0, k] /= s
    for t in range(1, T):
        s = 0.0
        for k in range(K):
            acc = 0.0
            for j in range(K):
                acc += fa[t - 1, j] * A[j, k]
            fa[t, k] = acc * B[t, k]
            s += fa[t, k]
        c[t] = s
        for k in range(K):
            fa[t, k] /= s
    bb = np.empty((T, K))
    for k in range(K):
        bb[T - 1, k] = 1.0
    for t in range(T - 2, -1, -1):
        for j in range(K):
            acc = 0.0
            for k in range(K):
                acc += A[j, k] * B[t + 1, k] * bb[t + 1, k]
            bb[t, j] = acc / c[t + 1]
    post = fa * bb
    xi = np.zeros((K, K))
    for t in range(T - 1):
        for j in range(K):
            for k in range(K):
                xi[j, k] += fa[t, j] * A[j, k] * B[t + 1, k] * bb[t + 1, k] / c[t + 1]
    ll = 0.0
    for t in range(T):
        ll += math.log(c[t]) + shift[t]
    return post, xi, ll
