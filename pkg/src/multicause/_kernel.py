"""Compiled per-record log-likelihood contributions.

Mechanism kinds (see ``core``): 0 MCAR, 1 MAR centered logistic in y1,
2 MAR affine logistic in y1, 3 NMAR centered logistic in y2.

Contributions are ``nan`` where a flat model is invalid, i.e. its cause
probabilities sum to one or more at an evaluated point.

NMAR integrals use ``y2 = m + s*z_k`` with ``s`` shared by all records, so
``exp(a*(y2 - b)) = exp(a*(m - b)) * exp(a*s*z_k)`` and the node factor is
computed once per evaluation.

Gauss-Hermite cannot resolve a logistic much steeper than the conditional
sd (``|a|*s`` above about 1.5). A factor with a single NMAR cause is then
split into a step at ``b``, integrated exactly by the normal cdf, plus an
odd remainder decaying like ``exp(-|t|)``, integrated by Gauss-Laguerre.
"""

import math

import numba
import numpy as np

PROB_FLOOR = 1e-300
PROB_CEIL = 1.0 - 1e-16
_LOG_2PI = math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
STEEP_SLOPE = 1.5

_jit = numba.njit(cache=True, error_model="numpy")


@_jit
def _logit_arg(kind, a, b, y1, y2):
    if kind == 1:
        return a * (y1 - b)
    if kind == 2:
        return a * y1 + b
    return a * (y2 - b)


@_jit
def _prob(kind, a, b, y1, y2):
    if kind == 0:
        return a
    return 1.0 / (1.0 + math.exp(_logit_arg(kind, a, b, y1, y2)))


@_jit
def _surv(kind, a, b, y1, y2):
    if kind == 0:
        return 1.0 - a
    return 1.0 / (1.0 + math.exp(-_logit_arg(kind, a, b, y1, y2)))


@_jit
def _log_clamped(p):
    if p < PROB_FLOOR:
        p = PROB_FLOOR
    elif p > PROB_CEIL:
        p = PROB_CEIL
    return math.log(p)


@_jit
def _node_prob_surv(a, b, cond_mean, cond_sd, z, big_a, e):
    # P and 1 - P of the NMAR logistic at one node, with the fast product
    # form and a direct fallback where it is 0 * inf.
    t = big_a * e
    if t != t:
        t = math.exp(a * (cond_mean - b) + a * cond_sd * z)
    p = 1.0 / (1.0 + t)
    s = 1.0 / (1.0 + 1.0 / t)
    return p, s


@_jit
def _expected_prob_surv(a, b, cond_mean, cond_sd, z, w, big_a, e, lt, lw):
    # E[P] and E[1 - P] of the NMAR logistic over y2 ~ N(cond_mean, cond_sd^2).
    if abs(a) * cond_sd <= STEEP_SLOPE:
        ep = 0.0
        es = 0.0
        for k in range(z.shape[0]):
            p, s = _node_prob_surv(a, b, cond_mean, cond_sd, z[k], big_a, e[k])
            ep += w[k] * p
            es += w[k] * s
        return ep, es
    c = (b - cond_mean) / cond_sd
    k = 1.0 / (abs(a) * cond_sd)
    sign = 1.0 if a > 0.0 else -1.0
    rem = 0.0
    for j in range(lt.shape[0]):
        hi = c + k * lt[j]
        lo = c - k * lt[j]
        rem += lw[j] * (math.exp(-0.5 * hi * hi) - math.exp(-0.5 * lo * lo))
    rem *= sign * k / _SQRT_2PI
    ep = 0.5 * math.erfc(-sign * c / _SQRT2) + rem
    es = 0.5 * math.erfc(sign * c / _SQRT2) - rem
    return ep, es


@_jit
def record_logliks(mu1, mu2, s1, s2, rho, kinds, ta, tb, incl, flat, merged,
                   y1, y2, m2, z, w, lt, lw, out):
    """Fill ``out`` with per-record contributions and return their sum.

    ``incl[c]`` False drops every factor of cause ``c`` (semi-direct and
    direct likelihoods). ``merged`` treats all nonzero ``m2`` as a single
    missing pattern whose cause is unknown. ``z, w`` is the Gauss-Hermite
    rule and ``lt, lw`` the Gauss-Laguerre rule with weights divided by
    ``1 + exp(-lt)``.
    """
    n_causes = kinds.shape[0]
    n_nodes = z.shape[0]
    r2 = 1.0 - rho * rho
    cond_sd = s2 * math.sqrt(r2)
    log_norm2 = _LOG_2PI + math.log(s1) + math.log(s2) + 0.5 * math.log(r2)
    log_norm1 = 0.5 * _LOG_2PI + math.log(s1)

    node_e = np.empty((n_causes, n_nodes))
    for c in range(n_causes):
        if kinds[c] == 3 and incl[c]:
            for k in range(n_nodes):
                node_e[c, k] = math.exp(ta[c] * cond_sd * z[k])
    p_rec = np.empty(n_causes)
    s_rec = np.empty(n_causes)
    big_a = np.empty(n_causes)

    total = 0.0
    for i in range(y1.shape[0]):
        u = (y1[i] - mu1) / s1
        m = m2[i]
        if m == 0:
            v = (y2[i] - mu2) / s2
            lf = -log_norm2 - (u * u - 2.0 * rho * u * v + v * v) / (2.0 * r2)
            if flat:
                miss = 0.0
                for c in range(n_causes):
                    if incl[c]:
                        miss += _prob(kinds[c], ta[c], tb[c], y1[i], y2[i])
                obs = 1.0 - miss if miss < 1.0 else np.nan
            else:
                obs = 1.0
                for c in range(n_causes):
                    if incl[c]:
                        obs *= _surv(kinds[c], ta[c], tb[c], y1[i], y2[i])
            out[i] = lf + _log_clamped(obs)
            total += out[i]
            continue

        lf1 = -log_norm1 - 0.5 * u * u
        cond_mean = mu2 + rho * s2 * u
        # Causes that matter for this record: all (merged) or the pattern's
        # cause plus, for a hierarchical model, every stronger one.
        if merged:
            first, last = 0, n_causes
        elif flat:
            first, last = m - 1, m
        else:
            first, last = 0, m
        n_nmar = 0
        nmar = -1
        for c in range(first, last):
            if not incl[c]:
                continue
            if kinds[c] == 3:
                n_nmar += 1
                nmar = c
                big_a[c] = math.exp(ta[c] * (cond_mean - tb[c]))
            else:
                p_rec[c] = _prob(kinds[c], ta[c], tb[c], y1[i], 0.0)
                s_rec[c] = _surv(kinds[c], ta[c], tb[c], y1[i], 0.0)
        ep = es = 0.0
        if n_nmar == 1:
            ep, es = _expected_prob_surv(ta[nmar], tb[nmar], cond_mean, cond_sd, z, w,
                                         big_a[nmar], node_e[nmar], lt, lw)

        if merged and not flat and n_nmar <= 1:
            # Total missingness probability is affine in the NMAR factor:
            # before + reach * P + after * (1 - P).
            before = 0.0
            alive = 1.0
            after = 0.0
            tail = 1.0
            reach = 1.0
            for c in range(n_causes):
                if not incl[c] or c == nmar:
                    continue
                if c < nmar or nmar < 0:
                    before += alive * p_rec[c]
                    alive *= s_rec[c]
                else:
                    after += tail * p_rec[c]
                    tail *= s_rec[c]
            if nmar >= 0:
                acc = before + alive * ep + alive * after * es
            else:
                acc = before
            out[i] = lf1 + _log_clamped(acc)
        elif merged:
            # Several NMAR causes, or a flat model checked pointwise.
            n_eval = n_nodes if n_nmar > 0 else 1
            acc = 0.0
            for k in range(n_eval):
                tot = 0.0
                alive = 1.0
                for c in range(n_causes):
                    if not incl[c]:
                        continue
                    if kinds[c] == 3:
                        p, s = _node_prob_surv(ta[c], tb[c], cond_mean, cond_sd, z[k], big_a[c], node_e[c, k])
                    else:
                        p, s = p_rec[c], s_rec[c]
                    if flat:
                        tot += p
                    else:
                        tot += alive * p
                        alive *= s
                if flat and tot >= 1.0:
                    tot = np.nan
                acc += (w[k] if n_nmar > 0 else 1.0) * tot
            out[i] = lf1 + _log_clamped(acc)
        else:
            outside = 1.0
            for c in range(first, last):
                if incl[c] and kinds[c] != 3:
                    outside *= p_rec[c] if c == m - 1 else s_rec[c]
            inside = 1.0
            if n_nmar == 1:
                inside = ep if nmar == m - 1 else es
            elif n_nmar > 1:
                inside = 0.0
                for k in range(n_nodes):
                    t = 1.0
                    for c in range(first, last):
                        if incl[c] and kinds[c] == 3:
                            p, s = _node_prob_surv(ta[c], tb[c], cond_mean, cond_sd, z[k], big_a[c], node_e[c, k])
                            t *= p if c == m - 1 else s
                    inside += w[k] * t
            out[i] = lf1 + _log_clamped(outside * inside)
        total += out[i]
    return total


@_jit
def loglik_from_free(x, args):
    """Log-likelihood at a transformed parameter vector; ``-inf`` where invalid.

    ``args`` is the tuple built by ``estimation.make_objective``.
    """
    (kinds, ta0, tb0, incl, flat, merged, y1, y2, m2, z, w, lt, lw,
     slot_cause, slot_pos, slot_mcar, out) = args
    if not (-700.0 < x[2] < 700.0 and -700.0 < x[3] < 700.0 and abs(x[4]) < 18.0):
        return -np.inf
    ta = ta0.copy()
    tb = tb0.copy()
    for j in range(slot_cause.shape[0]):
        c = slot_cause[j]
        k = slot_pos[j]
        if slot_mcar[j]:
            p = 1.0 / (1.0 + math.exp(-x[k]))
            ta[c] = min(max(p, PROB_FLOOR), PROB_CEIL)
        else:
            ta[c] = x[k]
            tb[c] = x[k + 1]
        if not (np.isfinite(ta[c]) and np.isfinite(tb[c])):
            return -np.inf
    total = record_logliks(x[0], x[1], math.exp(x[2]), math.exp(x[3]), math.tanh(x[4]),
                           kinds, ta, tb, incl, flat, merged, y1, y2, m2, z, w, lt, lw, out)
    if not np.isfinite(total):
        return -np.inf
    return total

