"""Monte Carlo oracles shared by the test modules.

Counterfactual covariances are recomputed from sample moments alone
(regressions solved on the sample covariance matrix), which is a separate
route from the library's QR fits and column arithmetic. Standard errors come
from a delete-one-group jackknife over per-group moment sums, so the
estimation error of the fitted coefficients is included.
"""
from __future__ import annotations

import numpy as np

from decon.scm import Role, Task

X, C, M, Y = Role.FEATURE, Role.CONFOUNDER, Role.MEDIATOR, Role.RESPONSE


def _reg(cov, target, regs):
    """Population-regression slopes of ``target`` columns on ``regs`` columns."""
    if len(regs) == 0:
        return np.zeros((0, len(target)))
    return np.linalg.solve(cov[np.ix_(regs, regs)], cov[np.ix_(regs, target)])


def cf_loadings(cov, roles, task, target) -> np.ndarray:
    """Rows express each counterfactual variable as a linear combination of the columns."""
    roles = list(roles)
    ix = {r: [i for i, rr in enumerate(roles) if rr is r] for r in Role}
    p = len(roles)
    nc, nm = len(ix[C]), len(ix[M])
    if task is Task.ANTICAUSAL:
        child, other = ix[X], ix[Y]
        regs = ix[C] + ix[M] + ix[Y]
        med_regs = ix[C] + ix[Y]
    else:
        child, other = ix[Y], ix[X]
        regs = ix[C] + ix[M] + ix[X]
        med_regs = ix[C] + ix[X]
    b = _reg(cov, child, regs)  # len(regs) x len(child)
    g_c, g_m, g_o = b[:nc].T, b[nc:nc + nm].T, b[nc + nm:].T
    eye = np.eye(p)
    resid = eye[child].copy()
    resid[:, regs] -= b.T
    target = str(getattr(target, "value", target))
    if target == "direct":
        out = resid.copy()
        out[:, other] += g_o
    elif target == "indirect":
        bm = _reg(cov, ix[M], med_regs)
        g_mc = bm[:nc].T
        m_star = eye[ix[M]].copy()
        m_star[:, ix[C]] -= g_mc
        out = resid + g_m @ m_star
    else:
        out = resid.copy()
        out[:, ix[C]] += g_c
    return out


def cf_statistic(cov, roles, task, target) -> np.ndarray:
    """Anticausal: ``Cov(X*_j, Y)`` per feature. Causal: ``Cov(Y*, X_j)`` per feature."""
    roles = list(roles)
    load = cf_loadings(cov, roles, task, target)
    if task is Task.ANTICAUSAL:
        y = [i for i, r in enumerate(roles) if r is Y][0]
        return load @ cov[:, y]
    xs = [i for i, r in enumerate(roles) if r is X]
    return (load @ cov[:, xs])[0]


def group_moments(values: np.ndarray, groups: int = 100):
    """Per-group column sums and cross-product matrices (trailing rows dropped)."""
    values = np.asarray(values, dtype=float)
    n, p = values.shape
    size = n // groups
    z = values[: size * groups].reshape(groups, size, p)
    return z.sum(axis=1), np.matmul(z.transpose(0, 2, 1), z), size


def _cov(s1, s2, n):
    mean = s1 / n
    return s2 / n - np.outer(mean, mean)


def jackknife(moments, stat):
    """Statistic of the ddof-0 moment covariance and its delete-one-group jackknife SE.

    ``moments`` is the output of :func:`group_moments`.
    """
    s1, s2, size = moments
    groups = s1.shape[0]
    t1, t2 = s1.sum(0), s2.sum(0)
    full = stat(_cov(t1, t2, size * groups))
    loo = np.array([stat(_cov(t1 - s1[g], t2 - s2[g], size * (groups - 1))) for g in range(groups)])
    se = np.sqrt((groups - 1) / groups * ((loo - loo.mean(0)) ** 2).sum(0))
    return full, se


def sample_cov(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """ddof-0 covariance of each column of ``a`` with each column of ``b``."""
    a = a - a.mean(0)
    b = b - b.mean(0)
    return a.T @ b / a.shape[0]


def plain_cov_se(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard error of a plain sample covariance: sd of centered products / sqrt(n)."""
    prod = (a - a.mean()) * (b - b.mean())
    return prod.std(ddof=1) / np.sqrt(prod.size)
