"""Numba kernels shared by the model and the learners.

Dynamics travel as a tuple ``(dense, U, rowmap, indptr, cols, vals)``.
When ``dense`` is true, ``U[k]`` holds the distinct rows of kernel slot k
(zero padded) and ``rowmap[k, s * A + a]`` indexes the row of (s, a).
Otherwise row ``k * S * A + s * A + a`` of the CSR triple lists the
successors of (s, a) under slot k, and ``U`` is only a shape carrier of
shape (K, S*A, 0). ``step_map[h]`` picks the slot used at step h.
"""

import numpy as np
from numba import njit

TIE_LOWEST = 0
TIE_RANDOM = 1

DUAL_BOX = 0
DUAL_L2 = 1
DUAL_L1 = 2
DUAL_LOGIT = 3

DIV_L1 = 0
DIV_L2 = 1
DIV_LINF = 2
DIV_JS = 3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def splitmix_next(state):
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def splitmix_uniform(state):
    state, z = splitmix_next(state)
    return state, (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


_LOG2 = np.log(2.0)
_FM = {"reassoc", "contract", "nsz", "arcp"}


@njit(cache=True, nogil=True, fastmath=_FM)
def _expect(dyn, k, V, out, tmp):
    """out[s * A + a] = sum_s' P_k(s'|s,a) V[s'] for every row."""
    dense, U, rowmap, indptr, cols, vals = dyn
    if dense:
        M = U[k]
        nu, S = M.shape
        for u in range(nu):
            acc = 0.0
            for j in range(S):
                acc += M[u, j] * V[j]
            tmp[u] = acc
        for i in range(out.shape[0]):
            out[i] = tmp[rowmap[k, i]]
    else:
        n = out.shape[0]
        base = k * n
        for i in range(n):
            acc = 0.0
            for j in range(indptr[base + i], indptr[base + i + 1]):
                acc += vals[j] * V[cols[j]]
            out[i] = acc


@njit(cache=True, nogil=True)
def _advance(dyn, k, w, nxt, wu):
    """nxt = sum_i w[i] * P_k(.|row i); ``wu`` is scratch of length U.shape[1]."""
    dense, U, rowmap, indptr, cols, vals = dyn
    nxt[:] = 0.0
    if dense:
        wu[:] = 0.0
        for i in range(w.shape[0]):
            if w[i] != 0.0:
                wu[rowmap[k, i]] += w[i]
        M = U[k]
        for u in range(M.shape[0]):
            m = wu[u]
            if m != 0.0:
                for j in range(M.shape[1]):
                    nxt[j] += m * M[u, j]
    else:
        base = k * w.shape[0]
        for i in range(w.shape[0]):
            m = w[i]
            if m != 0.0:
                for j in range(indptr[base + i], indptr[base + i + 1]):
                    nxt[cols[j]] += m * vals[j]


@njit(cache=True, nogil=True)
def occupancy(dyn, step_map, rho, pi):
    H, S, A = pi.shape
    d = np.zeros((H, S, A))
    ds = rho.copy()
    nxt = np.zeros(S)
    wu = np.zeros(dyn[1].shape[1])
    for h in range(H):
        for s in range(S):
            for a in range(A):
                d[h, s, a] = ds[s] * pi[h, s, a]
        if h + 1 < H:
            _advance(dyn, step_map[h], d[h].reshape(S * A), nxt, wu)
            ds[:] = nxt
    return d


@njit(cache=True, nogil=True)
def _state_marginals_det(dyn, step_map, rho, act, A, ds):
    dense, U, rowmap, indptr, cols, vals = dyn
    H, S = act.shape
    wu = np.zeros(U.shape[1])
    ds[0, :] = rho
    for h in range(H - 1):
        k = step_map[h]
        nxt = ds[h + 1]
        nxt[:] = 0.0
        if dense:
            wu[:] = 0.0
            for s in range(S):
                wu[rowmap[k, s * A + act[h, s]]] += ds[h, s]
            M = U[k]
            for u in range(M.shape[0]):
                m = wu[u]
                if m != 0.0:
                    for j in range(S):
                        nxt[j] += m * M[u, j]
        else:
            base = k * S * A
            for s in range(S):
                m = ds[h, s]
                if m != 0.0:
                    i = base + s * A + act[h, s]
                    for j in range(indptr[i], indptr[i + 1]):
                        nxt[cols[j]] += m * vals[j]


@njit(cache=True, nogil=True)
def occupancy_det(dyn, step_map, rho, act, A):
    H, S = act.shape
    ds = np.zeros((H, S))
    _state_marginals_det(dyn, step_map, rho, act, A, ds)
    d = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            d[h, s, act[h, s]] = ds[h, s]
    return d


@njit(cache=True, nogil=True)
def _vi(dyn, step_map, R, tie_mode, state, act, V, Q):
    H, S, A = R.shape
    V[:] = 0.0
    tmp = np.zeros(dyn[1].shape[1])
    for h in range(H - 1, -1, -1):
        if h < H - 1:
            _expect(dyn, step_map[h], V, Q, tmp)
        else:
            Q[:] = 0.0
        Rh = R[h]
        for s in range(S):
            best = -np.inf
            second = -np.inf
            top = 0
            for a in range(A):
                q = Rh[s, a] + Q[s * A + a]
                Q[s * A + a] = q
                if q > best:
                    second = best
                    best = q
                    top = a
                elif q > second:
                    second = q
            tol = 1e-12 * max(1.0, abs(best))
            V[s] = best
            if second < best - tol:
                act[h, s] = top
                continue
            ba = 0
            cnt = 0
            for a in range(A):
                if Q[s * A + a] >= best - tol:
                    cnt += 1
                    if cnt == 1:
                        ba = a
                    elif tie_mode == TIE_RANDOM:
                        state, u = splitmix_uniform(state)
                        if u * cnt < 1.0:
                            ba = a
            act[h, s] = ba
    return state


@njit(cache=True, nogil=True)
def value_iteration(dyn, step_map, R, tie_mode, state):
    """Backward induction on reward R (H, S, A).

    Returns the greedy action table (H, S), the optimal value of each
    initial state and the advanced RNG state (used only for random ties).
    Actions within a relative 1e-12 of the best count as tied.
    """
    H, S, A = R.shape
    act = np.zeros((H, S), dtype=np.int64)
    V = np.zeros(S)
    Q = np.zeros(S * A)
    state = _vi(dyn, step_map, R, tie_mode, state, act, V, Q)
    return act, V, state


@njit(cache=True, nogil=True)
def step_divergence(p, q, kind):
    """Divergence between two flattened per-step distributions."""
    n = p.shape[0]
    out = 0.0
    if kind == DIV_L1:
        for i in range(n):
            out += abs(p[i] - q[i])
    elif kind == DIV_L2:
        for i in range(n):
            out += (p[i] - q[i]) ** 2
        out = np.sqrt(out)
    elif kind == DIV_LINF:
        for i in range(n):
            out = max(out, abs(p[i] - q[i]))
    else:
        # log form: 0.5 * (p + q) underflows for denormal masses
        for i in range(n):
            if p[i] > 0.0 or q[i] > 0.0:
                lm = np.log(p[i] + q[i]) - _LOG2
                if p[i] > 0.0:
                    out += p[i] * (np.log(p[i]) - lm)
                if q[i] > 0.0:
                    out += q[i] * (np.log(q[i]) - lm)
        out *= 0.5
    return out


@njit(cache=True, nogil=True)
def total_divergence(d, target, kind):
    H = d.shape[0]
    out = 0.0
    for h in range(H):
        out += step_divergence(d[h].ravel(), target[h].ravel(), kind)
    return out


@njit(cache=True, nogil=True)
def _project_l1_ball(v):
    n = v.shape[0]
    tot = 0.0
    for i in range(n):
        tot += abs(v[i])
    if tot <= 1.0:
        return
    # zeros never enter the threshold, so sort the nonzero magnitudes only
    k = 0
    u = np.empty(n)
    for i in range(n):
        if v[i] != 0.0:
            u[k] = abs(v[i])
            k += 1
    u = np.sort(u[:k])[::-1]
    css = 0.0
    theta = 0.0
    for i in range(k):
        css += u[i]
        t = (css - 1.0) / (i + 1)
        if u[i] - t > 0.0:
            theta = t
    for i in range(n):
        m = abs(v[i]) - theta
        v[i] = np.sign(v[i]) * m if m > 0.0 else 0.0


@njit(cache=True, nogil=True)
def _log_sigmoid(z):
    return min(z, 0.0) - np.log1p(np.exp(-abs(z)))


@njit(cache=True, nogil=True)
def game(dyn, step_map, rho, target, T, dual, div_kind, adaptive, step_const,
         D, tie_mode, seed, logit_lr):
    """Run the discriminator/policy game for T rounds.

    The policy best-responds exactly to the current discriminator; the
    discriminator then takes one projected gradient step (or, for logits,
    one ascent step on the logistic objective). Iterates are deterministic
    policies, so d_t is carried as state marginals plus the action table.
    """
    H, S, A = target.shape
    c = np.zeros((H, S, A))
    R = np.zeros((H, S, A))
    dsum = np.zeros((H, S, A))
    d = np.zeros((H, S, A))
    ds = np.zeros((H, S))
    act = np.zeros((H, S), dtype=np.int64)
    V = np.zeros(S)
    Q = np.zeros(S * A)
    losses = np.zeros(T)
    fvals = np.zeros(T)
    etas = np.zeros(T)
    gnorms = np.zeros(T)
    state = seed
    gsq = 0.0
    if dual == DUAL_LOGIT:
        for h in range(H):
            for s in range(S):
                for a in range(A):
                    R[h, s, a] = -_log_sigmoid(0.0)
    for t in range(T):
        state = _vi(dyn, step_map, R, tie_mode, state, act, V, Q)
        _state_marginals_det(dyn, step_map, rho, act, A, ds)
        for h in range(H):
            for s in range(S):
                m = ds[h, s]
                if m != 0.0:
                    dsum[h, s, act[h, s]] += m
                    d[h, s, act[h, s]] = m
        f = 0.0
        g2 = 0.0
        if dual == DUAL_LOGIT:
            losses[t] = total_divergence(d, target, div_kind)
            for h in range(H):
                for s in range(S):
                    for a in range(A):
                        p = d[h, s, a]
                        q = target[h, s, a]
                        if p == 0.0 and q == 0.0:
                            continue
                        z = c[h, s, a]
                        # R holds -log sigmoid(z) from the previous round
                        lz = -R[h, s, a]
                        sig = np.exp(lz)
                        f += p * lz + q * (lz - z)
                        g = p * (1.0 - sig) - q * sig
                        g2 += g * g
                        z = min(20.0, max(-20.0, z + logit_lr * g))
                        c[h, s, a] = z
                        # the policy minimizes E[log D], i.e. maximizes -log D
                        R[h, s, a] = -_log_sigmoid(z)
            eta = logit_lr
        else:
            loss = 0.0
            for h in range(H):
                sq = 0.0
                ab = 0.0
                mx = 0.0
                for s in range(S):
                    for a in range(A):
                        g = target[h, s, a] - d[h, s, a]
                        f += c[h, s, a] * g
                        sq += g * g
                        ag = abs(g)
                        ab += ag
                        if ag > mx:
                            mx = ag
                g2 += sq
                if div_kind == DIV_L1:
                    loss += ab
                elif div_kind == DIV_L2:
                    loss += np.sqrt(sq)
                else:
                    loss += mx
            losses[t] = loss
            gsq += g2
            if adaptive:
                eta = D / np.sqrt(gsq) if gsq > 0.0 else D
            else:
                eta = step_const
            for h in range(H):
                ch = c[h]
                for s in range(S):
                    for a in range(A):
                        x = ch[s, a] - eta * (target[h, s, a] - d[h, s, a])
                        if dual == DUAL_BOX:
                            x = min(1.0, max(-1.0, x))
                        ch[s, a] = x
                flat = ch.reshape(-1)
                if dual == DUAL_L2:
                    nrm = np.sqrt(np.sum(flat * flat))
                    if nrm > 1.0:
                        flat /= nrm
                elif dual == DUAL_L1:
                    _project_l1_ball(flat)
                for s in range(S):
                    for a in range(A):
                        R[h, s, a] = -ch[s, a]
        for h in range(H):
            for s in range(S):
                d[h, s, act[h, s]] = 0.0
        fvals[t] = f
        etas[t] = eta
        gnorms[t] = np.sqrt(g2)
    return dsum / T, losses, fvals, etas, gnorms, c


@njit(cache=True, nogil=True)
def reach_min_from_rows(rows, M):
    """Minimum entry of ``rows[i] @ M[0] @ ... @ M[j-1]`` over i and j >= 0.

    ``rows`` is (U, G); ``M`` is (L, G, G). Used for the c coefficient.
    """
    U, G = rows.shape
    L = M.shape[0]
    out = np.inf
    v = np.zeros(G)
    w = np.zeros(G)
    for i in range(U):
        for g in range(G):
            v[g] = rows[i, g]
        for j in range(L + 1):
            for g in range(G):
                if v[g] < out:
                    out = v[g]
            if j == L:
                break
            for g in range(G):
                w[g] = 0.0
            for g in range(G):
                x = v[g]
                if x == 0.0:
                    continue
                for q in range(G):
                    w[q] += x * M[j, g, q]
            for g in range(G):
                v[g] = w[g]
    return out
