#!/usr/bin/env python3
"""Dense reference oracle for the nested-error exp-scale prediction crate.

Computes every quantity the Rust test suite freezes, on a fixed small
dataset, using only dense linear algebra (full n x n matrices through
numpy.linalg) plus numerical differentiation of defining functions.
Nothing here shares code with the Rust implementation: the library's
structured block algebra, hand-derived derivative formulas and trace
reductions are all held to the values printed by this script.

Independence notes:
  * eta_d(theta) and alpha_d(theta) derivatives are obtained by Richardson
    central differences of their defining functions, not from closed forms,
    so the library's analytic derivatives are genuinely cross-checked.
  * p_htk is computed from its defining expression tr(A_htk V) - a_htk with
    dense matrices, not from the symmetric-trace simplification used by the
    library.
  * The exp-scale moment constants are computed as Gaussian m.g.f. values of
    dense linear-combination vectors (including the augmented covariance of
    an out-of-sample unit), not from the spelled-out scalar expansions.

Run:  python3 tools/oracle/oracle.py > tools/oracle/oracle_out.txt
"""

import numpy as np

# ---------------------------------------------------------------------------
# Frozen fixture: D = 3 areas, n_d = (2, 3, 4), N_d = (4, 5, 7), p = 2.
# ---------------------------------------------------------------------------

NS = [2, 3, 4]
D = len(NS)
N = sum(NS)
P = 2
OFF = np.concatenate([[0], np.cumsum(NS)])

XS = [
    np.array([[1.0, 0.31], [1.0, 0.74]]),
    np.array([[1.0, 0.12], [1.0, 0.48], [1.0, 0.85]]),
    np.array([[1.0, 0.22], [1.0, 0.51], [1.0, 0.66], [1.0, 0.93]]),
]
XR = [
    np.array([[1.0, 0.55], [1.0, 0.90]]),
    np.array([[1.0, 0.40], [1.0, 0.63]]),
    np.array([[1.0, 0.18], [1.0, 0.37], [1.0, 0.72]]),
]
YS = [
    np.array([2.02, 1.33]),
    np.array([0.11, 0.52, -0.55]),
    np.array([1.04, 1.35, 0.92, 1.71]),
]

BETA0 = np.array([0.5, 0.2])
THETA0 = np.array([0.25, 0.5])

X = np.vstack(XS)
Y = np.concatenate(YS)
Z = np.zeros((N, D))
for d in range(D):
    Z[OFF[d]:OFF[d + 1], d] = 1.0

DELTA1 = Z @ Z.T
DELTA2 = np.eye(N)
DELTAS = [DELTA1, DELTA2]


def vmat(th):
    u, e = th
    return u * DELTA1 + e * np.eye(N)


def ops(th):
    v = vmat(th)
    vi = np.linalg.inv(v)
    q = np.linalg.inv(X.T @ vi @ X)
    pm = vi - vi @ X @ q @ X.T @ vi
    return v, vi, q, pm


def beta_tilde(th, y=Y):
    _, vi, q, _ = ops(th)
    return q @ (X.T @ vi @ y)


def loglik(th, y=Y):
    v, _, _, pm = ops(th)
    sign, logdet = np.linalg.slogdet(v)
    assert sign > 0
    return -0.5 * (logdet + y @ pm @ y)


def score(th, y=Y):
    _, vi, _, pm = ops(th)
    py = pm @ y
    return np.array([
        -0.5 * np.trace(vi @ dm) + 0.5 * py @ dm @ py for dm in DELTAS
    ])


def hessian_ll(th, y=Y):
    _, vi, _, pm = ops(th)
    py = pm @ y
    h = np.zeros((2, 2))
    for a in range(2):
        for b in range(2):
            h[a, b] = 0.5 * np.trace(vi @ DELTAS[a] @ vi @ DELTAS[b]) \
                - py @ DELTAS[a] @ pm @ DELTAS[b] @ py
    return h


def fisher(th):
    _, vi, _, pm = ops(th)
    f = np.zeros((2, 2))
    for a in range(2):
        for b in range(2):
            f[a, b] = -0.5 * np.trace(vi @ DELTAS[a] @ vi @ DELTAS[b]) \
                + np.trace(pm @ DELTAS[a] @ pm @ DELTAS[b])
    return f


def nu_vec(th):
    _, vi, _, pm = ops(th)
    return np.array([
        0.5 * (np.trace(pm @ dm) - np.trace(vi @ dm)) for dm in DELTAS
    ])


def boundary_fit(y=Y):
    """Closed-form ML at the sigma_u^2 = 0 face: e_hat = SSE_ols / n."""
    hat = X @ np.linalg.inv(X.T @ X) @ X.T
    sse = y @ (np.eye(N) - hat) @ y
    return np.array([0.0, sse / N])


def fit_ml(start, y=Y, max_iter=500):
    """Fisher scoring to a stationary point of the profile likelihood.

    The scoring map theta -> theta + F^-1 s need not contract near the
    optimum (its multiplier is I + F^-1 H, which can have spectral radius
    above one), so once the Fisher step is small and the observed Hessian is
    negative definite the iteration switches to Newton steps, which converge
    quadratically. If the iteration is pushed onto the sigma_u^2 = 0 face
    twice in a row, the exact boundary solution is returned instead.
    """
    th = np.array(start, dtype=float)
    projections = 0
    for it in range(max_iter):
        s = score(th, y)
        f = fisher(th)
        step = np.linalg.solve(f, s)
        if np.linalg.norm(step) < 1e-10:
            return th, it + 1
        cand = None
        projected = False
        if np.linalg.norm(step) < 1e-4:
            h = hessian_ll(th, y)
            if h[0, 0] < 0.0 and np.linalg.det(h) > 0.0:
                nd = np.linalg.solve(-h, s)
                trial = th + nd
                if trial[0] >= 0.0 and trial[1] > 1e-12:
                    cand = trial
        if cand is None and np.linalg.norm(step) < 1e-6:
            # Close to stationarity the line search only measures rounding
            # noise in the log-likelihood; take raw steps instead.
            cand = th + step
            projected = cand[0] < 0.0
            cand[0] = max(cand[0], 0.0)
        elif cand is None:
            lam = 1.0
            ll0 = loglik(th, y)
            while True:
                cand = th + lam * step
                projected = cand[0] < 0.0
                cand[0] = max(cand[0], 0.0)
                if cand[1] > 1e-12 and loglik(cand, y) >= ll0 - 1e-14:
                    break
                lam *= 0.5
                if lam < 1e-12:
                    cand = th
                    projected = False
                    break
        moved = np.linalg.norm(cand - th)
        th = cand
        projections = projections + 1 if projected else 0
        if projections >= 2:
            cand_b = boundary_fit(y)
            if score(cand_b, y)[0] <= 0.0:
                return cand_b, it + 1
            # Boundary is not a maximum; restart just inside the face.
            th = np.array([1e-8 * cand_b[1], cand_b[1]])
            projections = 0
            continue
        if moved < 1e-14:
            return th, it + 1
    raise AssertionError(f"no convergence from {start}: {th}")


# ---------------------------------------------------------------------------
# Predictors.
# ---------------------------------------------------------------------------

def gamma_alpha(th, n):
    u, e = th
    t = n * u + e
    g = n * u / t
    a = 0.5 * (u * (1.0 - g) + e)
    return g, a, t


def bp_units(beta, th, d):
    g, a, _ = gamma_alpha(th, NS[d])
    ybar = YS[d].mean()
    xbar = XS[d].mean(axis=0)
    return np.exp(XR[d] @ beta + g * (ybar - xbar @ beta) + a)


def bp_area(beta, th, d):
    w_s = np.exp(YS[d])
    nd_pop = NS[d] + XR[d].shape[0]
    return (w_s.sum() + bp_units(beta, th, d).sum()) / nd_pop


# ---------------------------------------------------------------------------
# Exact MCPE / MSE of the best predictor (known parameters).
# Derived from MCPE = E[cov(w_i, w_j | y_s)] for the conditional-mean
# predictor; see the project design notes for the sign derivation.
# ---------------------------------------------------------------------------

def mcpe_bp(beta, th, d, i, j):
    u, e = th
    g, _, _ = gamma_alpha(th, NS[d])
    xij = XR[d][i] + XR[d][j]
    lead = np.exp(2.0 * u + e + xij @ beta)
    bracket = 1.0 - np.exp(-u * (1.0 - g)) + (np.exp(e) - 1.0) * (i == j)
    return lead * bracket


def mse_bp_area(beta, th, d):
    u, e = th
    g, _, _ = gamma_alpha(th, NS[d])
    a = np.exp(XR[d] @ beta)
    s1 = 0.5 * (a.sum() ** 2 - (a ** 2).sum())
    s2 = (a ** 2).sum()
    nd_pop = NS[d] + XR[d].shape[0]
    core = 2.0 * (1.0 - np.exp(-u * (1.0 - g))) * s1 \
        + (np.exp(e) - np.exp(-u * (1.0 - g))) * s2
    return np.exp(2.0 * u + e) * core / nd_pop ** 2


# ---------------------------------------------------------------------------
# Gaussian m.g.f. machinery for the first-stage constants.
# ---------------------------------------------------------------------------

def eta_vec(th, d):
    u, _ = th
    _, vi, _, _ = ops(th)
    return u * (vi @ Z[:, d])


def c_vec(th, d, x_unit):
    """Coefficient vector of y_s in the log of the first-stage predictor."""
    g, _, _ = gamma_alpha(th, NS[d])
    xbar = XS[d].mean(axis=0)
    _, vi, q, _ = ops(th)
    return vi @ X @ q @ (x_unit - g * xbar) + eta_vec(th, d)


def e_dij(beta, th, d, xi, xj):
    """E(what_i what_j) = exp{2 alpha + x_ij'beta + (c_i+c_j)'V(c_i+c_j)/2}."""
    _, a, _ = gamma_alpha(th, NS[d])
    v, _, _, _ = ops(th)
    s = c_vec(th, d, xi) + c_vec(th, d, xj)
    return np.exp(2.0 * a + (xi + xj) @ beta + 0.5 * s @ v @ s)


def aug_cov(th, d):
    """Joint covariance of (y_s, y_dj) for an out-of-sample unit j in d."""
    u, e = th
    v = vmat(th)
    va = np.zeros((N + 1, N + 1))
    va[:N, :N] = v
    va[:N, N] = u * Z[:, d]
    va[N, :N] = u * Z[:, d]
    va[N, N] = u + e
    return va


def estar_dij(beta, th, d, xi, xj):
    """E(what_i w_j) via the m.g.f. of (c_i'y_s + y_dj)."""
    _, a, _ = gamma_alpha(th, NS[d])
    va = aug_cov(th, d)
    m = np.concatenate([c_vec(th, d, xi), [1.0]])
    return np.exp(a + (xi + xj) @ beta + 0.5 * m @ va @ m)


def eww(beta, th, d, xi, xj, same):
    u, e = th
    return np.exp((xi + xj) @ beta + 2.0 * u + e * (1.0 + same))


def m1(beta, th, d, i, j):
    xi, xj = XR[d][i], XR[d][j]
    return e_dij(beta, th, d, xi, xj) + eww(beta, th, d, xi, xj, i == j) \
        - estar_dij(beta, th, d, xi, xj) - estar_dij(beta, th, d, xj, xi)


# ---------------------------------------------------------------------------
# Numerical theta-derivatives of defining functions (Richardson central).
# ---------------------------------------------------------------------------

def rich_grad(fun, th, h0=1e-6):
    out = []
    for k in range(2):
        h = h0 * (1.0 + abs(th[k]))
        ek = np.zeros(2)
        ek[k] = 1.0

        def d1(step):
            return (fun(th + step * ek) - fun(th - step * ek)) / (2 * step)

        out.append((4.0 * d1(h / 2) - d1(h)) / 3.0)
    return np.array(out) if np.isscalar(out[0]) else np.stack(out, axis=-1)


def rich_hess_entry(fun, th, a, b, h0=1e-4):
    ha = h0 * (1.0 + abs(th[a]))
    hb = h0 * (1.0 + abs(th[b]))
    ea, eb = np.zeros(2), np.zeros(2)
    ea[a] = 1.0
    eb[b] = 1.0
    if a == b:
        def d2(s):
            return (fun(th + s * ea) - 2.0 * fun(th) + fun(th - s * ea)) / s ** 2
        return (4.0 * d2(ha / 2) - d2(ha)) / 3.0

    def d2(sa, sb):
        return (fun(th + sa * ea + sb * eb) - fun(th + sa * ea - sb * eb)
                - fun(th - sa * ea + sb * eb) + fun(th - sa * ea - sb * eb)) \
            / (4.0 * sa * sb)

    return (4.0 * d2(ha / 2, hb / 2) - d2(ha, hb)) / 3.0


def alpha_fun(d):
    return lambda th: gamma_alpha(th, NS[d])[1]


def eta_fun(d, k):
    return lambda th: eta_vec(th, d)[k]


# ---------------------------------------------------------------------------
# Second-order tensors (dense).
# ---------------------------------------------------------------------------

def phi2(th):
    _, _, _, pm = ops(th)
    f = np.zeros((2, 2))
    for a in range(2):
        for b in range(2):
            f[a, b] = np.trace(pm @ DELTAS[a] @ pm @ DELTAS[b])
    return f


def phi3(th, h, t, k):
    _, _, _, pm = ops(th)
    return np.trace(pm @ DELTAS[h] @ pm @ DELTAS[t] @ pm @ DELTAS[k])


def a3(th, h, t, k):
    _, vi, _, _ = ops(th)
    return np.trace(vi @ DELTAS[h] @ vi @ DELTAS[t] @ vi @ DELTAS[k])


def p_mat(th, h):
    """P_h from its defining expression tr(A_htk V) - a_htk."""
    v, _, _, pm = ops(th)
    out = np.zeros((2, 2))
    for t in range(2):
        for k in range(2):
            ahtk = pm @ DELTAS[h] @ pm @ DELTAS[t] @ pm @ DELTAS[k] @ pm \
                + pm @ DELTAS[t] @ pm @ DELTAS[k] @ pm @ DELTAS[h] @ pm \
                + pm @ DELTAS[t] @ pm @ DELTAS[h] @ pm @ DELTAS[k] @ pm
            out[t, k] = np.trace(ahtk @ v) - a3(th, h, t, k)
    return out


def varsigma(th):
    finv = np.linalg.inv(fisher(th))
    return np.array([np.trace(finv @ p_mat(th, h)) for h in range(2)])


def eta_jac(th, d):
    """n x 2 Jacobian of eta_d(theta) by Richardson central differences."""
    cols = []
    for k in range(2):
        h = 1e-6 * (1.0 + abs(th[k]))
        ek = np.zeros(2)
        ek[k] = 1.0

        def d1(step):
            return (eta_vec(th + step * ek, d) - eta_vec(th - step * ek, d)) \
                / (2 * step)

        cols.append((4.0 * d1(h / 2) - d1(h)) / 3.0)
    return np.stack(cols, axis=1)


def eta_hess(th, d, a, b):
    """n-vector of second partials of eta_d by Richardson differences."""
    ea, eb = np.zeros(2), np.zeros(2)
    ea[a] = 1.0
    eb[b] = 1.0
    ha = 1e-4 * (1.0 + abs(th[a]))
    hb = 1e-4 * (1.0 + abs(th[b]))
    if a == b:
        def d2(s):
            return (eta_vec(th + s * ea, d) - 2.0 * eta_vec(th, d)
                    + eta_vec(th - s * ea, d)) / s ** 2
        return (4.0 * d2(ha / 2) - d2(ha)) / 3.0

    def d2(sa, sb):
        return (eta_vec(th + sa * ea + sb * eb, d)
                - eta_vec(th + sa * ea - sb * eb, d)
                - eta_vec(th - sa * ea + sb * eb, d)
                + eta_vec(th - sa * ea - sb * eb, d)) / (4.0 * sa * sb)

    return (4.0 * d2(ha / 2, hb / 2) - d2(ha, hb)) / 3.0


def alpha_grad(th, d):
    return rich_grad(alpha_fun(d), th)


def alpha_hess(th, d):
    out = np.zeros((2, 2))
    for a in range(2):
        for b in range(2):
            out[a, b] = rich_hess_entry(alpha_fun(d), th, a, b)
    return out


def second_order_parts(th, d):
    """Everything entering M2 / T for area d, dense and FD-based."""
    v, _, _, _ = ops(th)
    finv = np.linalg.inv(fisher(th))
    eta = eta_vec(th, d)
    jac = eta_jac(th, d)
    dal = alpha_grad(th, d)
    vvec = dal + 2.0 * (jac.T @ (v @ eta))
    brace = np.trace(finv @ (jac.T @ v @ jac)) + vvec @ finv @ vvec
    # T-term pieces.
    emat = 2.0 * np.stack([DELTAS[0] @ eta, DELTAS[1] @ eta], axis=1)
    deta_e = jac.T @ emat
    amat = alpha_hess(th, d)
    bmat = np.zeros((2, 2))
    for a in range(2):
        for b in range(2):
            bmat[a, b] = 2.0 * eta @ v @ eta_hess(th, d, a, b)
    gmat = np.stack([
        vvec @ finv @ np.array([[phi3(th, h, k, l) for l in range(2)]
                                for h in range(2)])
        for k in range(2)
    ], axis=0)
    eps = np.array([4.0 * eta @ DELTAS[0] @ eta, 4.0 * eta @ DELTAS[1] @ eta])
    nu = nu_vec(th)
    vs = varsigma(th)
    tbrace = np.trace(finv @ (deta_e + 0.5 * (amat + bmat) - gmat)) \
        + vvec @ finv @ (nu + 0.5 * (eps + vs))
    return brace, tbrace, vvec, dal, amat, bmat, deta_e, eps


def second_order_parts_star(th, d):
    """Starred versions built in the augmented (y_s, y_dj) space."""
    va = aug_cov(th, d)
    finv = np.linalg.inv(fisher(th))
    # Augmented derivative matrices: the extra unit belongs to area d.
    zcol = np.concatenate([Z[:, d], [1.0]])
    d1a = np.zeros((N + 1, N + 1))
    for dd in range(D):
        if dd == d:
            d1a += np.outer(zcol, zcol)
        else:
            zc = np.concatenate([Z[:, dd], [0.0]])
            d1a += np.outer(zc, zc)
    d2a = np.eye(N + 1)
    eta = np.concatenate([eta_vec(th, d), [0.0]])
    jac = np.vstack([eta_jac(th, d), np.zeros((1, 2))])
    etastar = eta.copy()
    etastar[N] += 1.0
    dal = alpha_grad(th, d)
    vvec = dal + jac.T @ (va @ etastar)
    brace = np.trace(finv @ (jac.T @ va @ jac)) + vvec @ finv @ vvec
    emat = np.stack([d1a @ etastar, d2a @ etastar], axis=1)
    deta_e = jac.T @ emat
    amat = alpha_hess(th, d)
    bmat = np.zeros((2, 2))
    for a in range(2):
        for b in range(2):
            hv = np.concatenate([eta_hess(th, d, a, b), [0.0]])
            # No factor 2 here: the border row of the augmented covariance
            # already contributes a second copy of eta @ v @ hess.
            bmat[a, b] = etastar @ va @ hv
    gmat = np.stack([
        vvec @ finv @ np.array([[phi3(th, h, k, l) for l in range(2)]
                                for h in range(2)])
        for k in range(2)
    ], axis=0)
    eps = np.array([etastar @ d1a @ etastar, etastar @ d2a @ etastar])
    nu = nu_vec(th)
    vs = varsigma(th)
    tbrace = np.trace(finv @ (deta_e + 0.5 * (amat + bmat) - gmat)) \
        + vvec @ finv @ (nu + 0.5 * (eps + vs))
    return brace, tbrace


def m2(beta, th, d, i, j):
    brace, _, _, _, _, _, _, _ = second_order_parts(th, d)
    return e_dij(beta, th, d, XR[d][i], XR[d][j]) * brace


def m3_pair(beta, th, d, i, j):
    """M3_{d,ij} = M2/2 + T - M2*/2 - T* with the augmented unit at j."""
    brace, tbrace, *_ = second_order_parts(th, d)
    brace_s, tbrace_s = second_order_parts_star(th, d)
    e = e_dij(beta, th, d, XR[d][i], XR[d][j])
    es = estar_dij(beta, th, d, XR[d][i], XR[d][j])
    return e * (0.5 * brace + tbrace) - es * (0.5 * brace_s + tbrace_s)


def mcpe_eb2(beta, th, d, i, j):
    return m1(beta, th, d, i, j) + m2(beta, th, d, i, j) \
        + m3_pair(beta, th, d, i, j) + m3_pair(beta, th, d, j, i)


def mse_eb2_area(beta, th, d):
    r = XR[d].shape[0]
    nd_pop = NS[d] + r
    total = 0.0
    for i in range(r):
        total += mcpe_eb2(beta, th, d, i, i)
        for j in range(i + 1, r):
            total += 2.0 * mcpe_eb2(beta, th, d, i, j)
    return total / nd_pop ** 2


# ---------------------------------------------------------------------------
# Bias-correction terms for the plugged-in M1 (FD spec matches the library:
# step 1e-4 * (1 + |theta_k|), central, one Richardson level).
# ---------------------------------------------------------------------------

def m1_fun(beta, d, i, j):
    return lambda th: m1(beta, th, d, i, j)


def m1_grad(beta, th, d, i, j):
    fun = m1_fun(beta, d, i, j)
    out = np.zeros(2)
    for k in range(2):
        h = 1e-4 * (1.0 + abs(th[k]))
        ek = np.zeros(2)
        ek[k] = 1.0

        def d1(s):
            return (fun(th + s * ek) - fun(th - s * ek)) / (2 * s)

        out[k] = (4.0 * d1(h / 2) - d1(h)) / 3.0
    return out


def m1_hess(beta, th, d, i, j):
    fun = m1_fun(beta, d, i, j)
    out = np.zeros((2, 2))
    for a in range(2):
        for b in range(2):
            out[a, b] = rich_hess_entry(fun, th, a, b, h0=1e-4)
    return 0.5 * (out + out.T)


def lambdas(beta, th, d, i, j):
    finv = np.linalg.inv(fisher(th))
    g1 = m1_grad(beta, th, d, i, j)
    nu = nu_vec(th)
    phi_h = [np.array([[phi3(th, h, t, k) for k in range(2)]
                       for t in range(2)]) for h in range(2)]
    gam_h = [np.array([[a3(th, h, t, k) for k in range(2)]
                       for t in range(2)]) for h in range(2)]
    phi = phi2(th)
    l1 = 2.0 * g1 @ finv @ nu
    l2 = -g1 @ finv @ np.array([np.trace(ph @ finv) for ph in phi_h])
    l3 = 0.25 * g1 @ finv @ np.array([
        np.trace((3.0 * phi_h[h] - gam_h[h]) @ finv @ phi @ finv)
        for h in range(2)
    ])
    h1 = m1_hess(beta, th, d, i, j)
    l4 = 0.25 * np.trace(h1 @ finv @ phi @ finv)
    _, _, q, _ = ops(th)
    xij = XR[d][i] + XR[d][j]
    l5 = m1(beta, th, d, i, j) * (xij @ q @ xij)
    return np.array([l1, l2, l3, l4, l5])


def mcpe_estimate_bp(beta, th, d, i, j):
    return m1(beta, th, d, i, j) - lambdas(beta, th, d, i, j).sum()


def mcpe_estimate_eb2(beta, th, d, i, j):
    return mcpe_estimate_bp(beta, th, d, i, j) + m2(beta, th, d, i, j) \
        + m3_pair(beta, th, d, i, j) + m3_pair(beta, th, d, j, i)


def mse_estimate_eb2_area(beta, th, d):
    r = XR[d].shape[0]
    nd_pop = NS[d] + r
    total = 0.0
    for i in range(r):
        total += mcpe_estimate_eb2(beta, th, d, i, i)
        for j in range(i + 1, r):
            total += 2.0 * mcpe_estimate_eb2(beta, th, d, i, j)
    return total / nd_pop ** 2


# ---------------------------------------------------------------------------
# Output.
# ---------------------------------------------------------------------------

def emit(name, val):
    val = np.asarray(val, dtype=float)
    if val.ndim == 0:
        print(f"{name} = {float(val):.17e}")
    else:
        for idx, x in np.ndenumerate(val):
            tag = "_".join(str(k) for k in idx)
            print(f"{name}_{tag} = {x:.17e}")


def main():
    th0 = THETA0
    b0 = BETA0

    print("# fixture: D=3, n=(2,3,4), N=(4,5,7), p=2")
    print("# theta0 = (0.25, 0.5), beta0 = (0.5, 0.2)")

    emit("loglik0", loglik(th0))
    emit("beta_tilde0", beta_tilde(th0))
    emit("score0", score(th0))
    emit("hessian0", hessian_ll(th0))
    emit("fisher0", fisher(th0))
    emit("nu0", nu_vec(th0))

    # ML fit from several starts; verify they agree.
    fits = [fit_ml(s) for s in ([0.25, 0.5], [1.0, 1.0], [0.01, 2.0])]
    ths = np.array([f[0] for f in fits])
    assert np.allclose(ths, ths[0], rtol=0.0, atol=1e-9), ths
    th_hat = ths[0]
    emit("theta_hat", th_hat)
    emit("beta_hat", beta_tilde(th_hat))
    emit("loglik_hat", loglik(th_hat))
    emit("score_at_hat", score(th_hat))

    # Downstream "at the fit" quantities are evaluated at this short literal
    # near the ML fit, so they freeze exactly on both sides.
    th_lit = np.round(th_hat, 6)
    emit("theta_lit", th_lit)

    # Boundary fit on a within-area-only response (closed form (0, SSE/n)).
    y_flat = Y - np.repeat([ys.mean() for ys in YS], NS) + Y.mean()
    emit("boundary_theta", fit_ml([0.25, 0.5], y=y_flat)[0])
    emit("boundary_theta_closed", boundary_fit(y_flat))

    for d in range(D):
        g, a, t = gamma_alpha(th0, NS[d])
        emit(f"gamma0_{d}", g)
        emit(f"alpha0_{d}", a)
        emit(f"bp_units_{d}", bp_units(b0, th0, d))
        emit(f"bp_area_{d}", bp_area(b0, th0, d))
        emit(f"eb1_units_{d}", bp_units(beta_tilde(th0), th0, d))
        emit(f"eb2_units_{d}", bp_units(beta_tilde(th_lit), th_lit, d))
        emit(f"eb2_area_{d}", bp_area(beta_tilde(th_lit), th_lit, d))

    # Exact BP uncertainty at (beta0, theta0).
    pairs = [(0, 0, 0), (0, 0, 1), (0, 1, 1), (2, 0, 2)]
    for (d, i, j) in pairs:
        emit(f"mcpe_bp_{d}_{i}_{j}", mcpe_bp(b0, th0, d, i, j))
    for d in range(D):
        emit(f"mse_bp_area_{d}", mse_bp_area(b0, th0, d))

    # First-stage constants and M1.
    for (d, i, j) in pairs:
        xi, xj = XR[d][i], XR[d][j]
        emit(f"e_dij_{d}_{i}_{j}", e_dij(b0, th0, d, xi, xj))
        emit(f"estar_dij_{d}_{i}_{j}", estar_dij(b0, th0, d, xi, xj))
        emit(f"estar_dji_{d}_{i}_{j}", estar_dij(b0, th0, d, xj, xi))
        emit(f"m1_{d}_{i}_{j}", m1(b0, th0, d, i, j))

    # Second-order tensors at theta0.
    emit("phi2", phi2(th0))
    for (h, t, k) in [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)]:
        emit(f"phi3_{h}{t}{k}", phi3(th0, h, t, k))
        emit(f"a3_{h}{t}{k}", a3(th0, h, t, k))
    emit("p_mat_0", p_mat(th0, 0))
    emit("p_mat_1", p_mat(th0, 1))
    emit("varsigma", varsigma(th0))

    for d in range(D):
        brace, tbrace, vvec, dal, amat, bmat, deta_e, eps = \
            second_order_parts(th0, d)
        emit(f"m2_brace_{d}", brace)
        emit(f"t_brace_{d}", tbrace)
        emit(f"v_{d}", vvec)
        emit(f"dalpha_{d}", dal)
        emit(f"d2alpha_{d}", amat)
        emit(f"bmat_{d}", bmat)
        emit(f"deta_e_{d}", deta_e)
        emit(f"eps_{d}", eps)
        brace_s, tbrace_s = second_order_parts_star(th0, d)
        emit(f"m2_brace_star_{d}", brace_s)
        emit(f"t_brace_star_{d}", tbrace_s)

    for (d, i, j) in pairs:
        emit(f"m2_{d}_{i}_{j}", m2(b0, th0, d, i, j))
        emit(f"m3_{d}_{i}_{j}", m3_pair(b0, th0, d, i, j))
        emit(f"m3_{d}_{j}_{i}", m3_pair(b0, th0, d, j, i))
        emit(f"mcpe_eb2_{d}_{i}_{j}", mcpe_eb2(b0, th0, d, i, j))
    for d in range(D):
        emit(f"mse_eb2_area_{d}", mse_eb2_area(b0, th0, d))

    # Bias corrections at theta0 and full estimates at the ML fit.
    for (d, i, j) in pairs:
        emit(f"lambda_{d}_{i}_{j}", lambdas(b0, th0, d, i, j))
    b_lit = beta_tilde(th_lit)
    for (d, i, j) in pairs:
        emit(f"mcpe_est_bp_{d}_{i}_{j}", mcpe_estimate_bp(b_lit, th_lit, d, i, j))
        emit(
            f"mcpe_est_eb2_{d}_{i}_{j}",
            mcpe_estimate_eb2(b_lit, th_lit, d, i, j),
        )
    for d in range(D):
        emit(f"mse_est_eb2_area_{d}", mse_estimate_eb2_area(b_lit, th_lit, d))


if __name__ == "__main__":
    main()
