"""Causality-aware counterfactual features and responses.

Anticausal tasks (response causes features): regress every feature on the
confounders, mediators and response, then rebuild the features from the
coefficients of the pathway of interest plus the estimated residuals.
Causal tasks do the same for the response, regressed on confounders,
mediators and features.

Only the direct-path feature adjustment can be applied to unlabeled data
(by subtracting the confounder and mediator contributions). The indirect and
confounding-only constructions need the response and are meant for
attributing predictive performance, not for deployment.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputError, MissingColumnError, RoleError, ShapeError
from .regression import OlsFit, ols, ols_many
from .scm import (
    Dataset,
    LinearScm,
    Role,
    Task,
    implied_moments,
    reparameterize,
    require_block_independent,
    validate,
)

X, C, M, Y = Role.FEATURE, Role.CONFOUNDER, Role.MEDIATOR, Role.RESPONSE


class PathTarget(str, Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"
    CONFOUNDING = "confounding"

    @classmethod
    def parse(cls, value) -> "PathTarget":
        if isinstance(value, PathTarget):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"confounding_only": "confounding", "confoundingonly": "confounding",
                   "deconfounding": "direct"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise InputError(f"unknown path target {value!r}") from None


def _stack(fits: dict, names: list, regressors: list) -> np.ndarray:
    """Coefficient matrix ``len(names) x len(regressors)`` gathered from per-variable fits."""
    out = np.zeros((len(names), len(regressors)))
    for i, name in enumerate(names):
        for j, reg in enumerate(regressors):
            out[i, j] = fits[name].coef(reg)
    return out


def _columns(data: Dataset, names: list, what: str) -> np.ndarray:
    missing = [n for n in names if n not in data.names]
    if missing:
        raise MissingColumnError(f"{what} columns {missing} absent from dataset")
    return data.select(names)


def _require_same(found: list, expected: list, what: str) -> None:
    if list(found) != list(expected):
        raise ShapeError(f"{what} columns {found} do not match the fit's {expected}")


def _fit_all(design: np.ndarray, data: Dataset, targets: list, names: list):
    """Per-target fits on a shared design, plus the ``n x len(targets)`` residual matrix."""
    if not targets:
        return {}, np.zeros((data.n, 0))
    y = _columns(data, targets, "target")
    fits = ols_many(design, y, names=names)
    resid = np.column_stack([f.residuals for f in fits])
    return dict(zip(targets, fits)), resid


@dataclass(frozen=True, eq=False)
class AnticausalFit:
    """Per-feature fits of ``X_j ~ C + M + Y`` and per-mediator fits of ``M_j ~ C + Y``."""

    train: Dataset
    features: list
    confounders: list
    mediators: list
    response: str
    feature_fits: dict
    mediator_fits: dict
    means: dict
    residual_matrix: np.ndarray

    @property
    def intercept_x(self) -> np.ndarray:
        return np.array([self.feature_fits[n].intercept for n in self.features])

    @property
    def gamma_xc(self) -> np.ndarray:
        return _stack(self.feature_fits, self.features, self.confounders)

    @property
    def gamma_xm(self) -> np.ndarray:
        return _stack(self.feature_fits, self.features, self.mediators)

    @property
    def gamma_xy(self) -> np.ndarray:
        return _stack(self.feature_fits, self.features, [self.response])[:, 0]

    @property
    def gamma_mc(self) -> np.ndarray:
        return _stack(self.mediator_fits, self.mediators, self.confounders)

    @property
    def gamma_my(self) -> np.ndarray:
        return _stack(self.mediator_fits, self.mediators, [self.response])[:, 0]

    @property
    def residuals_x(self) -> np.ndarray:
        return self.residual_matrix

    def coefficients(self) -> dict:
        """JSON-friendly summary of the fitted effects."""
        return {
            "features": list(self.features),
            "confounders": list(self.confounders),
            "mediators": list(self.mediators),
            "response": self.response,
            "intercept_x": self.intercept_x.tolist(),
            "gamma_xc": self.gamma_xc.tolist(),
            "gamma_xm": self.gamma_xm.tolist(),
            "gamma_xy": self.gamma_xy.tolist(),
            "gamma_mc": self.gamma_mc.tolist(),
            "gamma_my": self.gamma_my.tolist(),
        }


def fit_anticausal(train: Dataset, include_mediators: bool = True) -> AnticausalFit:
    """Estimate the reparameterized anticausal effects and residuals by OLS.

    With ``include_mediators=False`` mediator columns are ignored and the
    confounder/response coefficients are total effects.
    """
    if not train.has(Y):
        raise RoleError("training data needs a response column")
    if not train.has(X):
        raise RoleError("training data needs at least one feature column")
    features = train.names_of(X)
    confounders = train.names_of(C)
    mediators = train.names_of(M) if include_mediators else []
    response = train.names_of(Y)[0]

    mreg = confounders + [response]
    xreg = confounders + mediators + [response]
    md = _columns(train, mreg, "regressor")
    xd = _columns(train, xreg, "regressor")
    mediator_fits, _ = _fit_all(md, train, mediators, mreg)
    feature_fits, resid = _fit_all(xd, train, features, xreg)
    means = {n: float(train.column(n).mean()) for n in train.names}
    return AnticausalFit(train, features, confounders, mediators, response,
                         feature_fits, mediator_fits, means, resid)


def generate_cf_features(fit: AnticausalFit, data: Dataset | None = None,
                         target=PathTarget.DIRECT) -> Dataset:
    """Replace the feature columns by counterfactual features.

    ``data=None`` means the fitting set, where stored residuals are reused
    (``X* = mu + G_XY Y + W`` for the direct target). On any other dataset the
    direct target uses ``X - G_XC C - G_XM M`` and needs no response; the
    indirect and confounding targets recompute residuals and need every
    column including the response.
    """
    target = PathTarget.parse(target)
    on_train = data is None
    data = fit.train if on_train else data
    _require_same(data.names_of(X), fit.features, "feature")
    if target is PathTarget.INDIRECT and not fit.mediators:
        raise InputError("indirect target needs a fit with mediators")
    if target is PathTarget.CONFOUNDING and not fit.confounders:
        raise InputError("confounding target needs at least one confounder")

    cv = _columns(data, fit.confounders, "confounder")
    mv = _columns(data, fit.mediators, "mediator")
    if target is PathTarget.DIRECT and on_train:
        y = data.column(fit.response)
        x_star = fit.intercept_x + np.outer(y, fit.gamma_xy) + fit.residuals_x
    elif target is PathTarget.DIRECT:
        x_star = _columns(data, fit.features, "feature") - cv @ fit.gamma_xc.T - mv @ fit.gamma_xm.T
    else:
        if on_train:
            w_x = fit.residuals_x
        else:
            y = _columns(data, [fit.response], "response")[:, 0]
            w_x = (_columns(data, fit.features, "feature") - fit.intercept_x - cv @ fit.gamma_xc.T
                   - mv @ fit.gamma_xm.T - np.outer(y, fit.gamma_xy))
        if target is PathTarget.INDIRECT:
            m_star = mv - cv @ fit.gamma_mc.T
            x_star = m_star @ fit.gamma_xm.T + w_x
        else:
            x_star = cv @ fit.gamma_xc.T + w_x
    return data.with_columns(fit.features, x_star, f"adjusted:{target.value}")


def algorithm1_adjust(train: Dataset, test, recenter: bool = False):
    """Confounder adjustment of training and (unlabeled) test features.

    Each feature is regressed on the response and confounders in the
    training set. Training features become ``mu + b_Y Y + W``; test features
    become ``X - sum_i b_Ci C_i`` using the training coefficients.

    ``test`` may be a single dataset or a sequence of them; the return value
    mirrors it. ``recenter`` shifts each adjusted test set so its feature
    means match the adjusted training features (off by default).
    """
    if train.has(M):
        raise RoleError("confounder adjustment takes no mediator columns; "
                        "use fit_anticausal(..., include_mediators=False) for total effects")
    fit = fit_anticausal(train)
    train_star = generate_cf_features(fit, None, PathTarget.DIRECT)
    single = isinstance(test, Dataset)
    tests = [test] if single else list(test)
    out = []
    for ts in tests:
        if ts.has(M):
            raise RoleError("test data has mediator columns")
        _require_same(ts.names_of(C), fit.confounders, "confounder")
        ts_star = generate_cf_features(fit, ts, PathTarget.DIRECT)
        if recenter:
            shift = (train_star.columns(X).mean(axis=0) - ts_star.columns(X).mean(axis=0))
            ts_star = ts_star.with_columns(fit.features, ts_star.columns(X) + shift)
        out.append(ts_star)
    return train_star, (out[0] if single else out)


@dataclass(frozen=True, eq=False)
class CausalFit:
    """Fit of ``Y ~ C + M + X`` plus per-mediator fits of ``M_j ~ C + X``."""

    train: Dataset
    features: list
    confounders: list
    mediators: list
    response: str
    response_fit: OlsFit
    mediator_fits: dict

    @property
    def intercept_y(self) -> float:
        return self.response_fit.intercept

    def _gamma_y(self, names) -> np.ndarray:
        return np.array([self.response_fit.coef(n) for n in names])

    @property
    def gamma_yc(self) -> np.ndarray:
        return self._gamma_y(self.confounders)

    @property
    def gamma_ym(self) -> np.ndarray:
        return self._gamma_y(self.mediators)

    @property
    def gamma_yx(self) -> np.ndarray:
        return self._gamma_y(self.features)

    @property
    def gamma_mc(self) -> np.ndarray:
        return _stack(self.mediator_fits, self.mediators, self.confounders)

    @property
    def gamma_mx(self) -> np.ndarray:
        return _stack(self.mediator_fits, self.mediators, self.features)


def fit_causal(train: Dataset) -> CausalFit:
    if not train.has(Y):
        raise RoleError("training data needs a response column")
    if not train.has(X):
        raise RoleError("training data needs at least one feature column")
    features = train.names_of(X)
    confounders = train.names_of(C)
    mediators = train.names_of(M)
    response = train.names_of(Y)[0]
    yreg = confounders + mediators + features
    mreg = confounders + features
    md = _columns(train, mreg, "regressor")
    mediator_fits, _ = _fit_all(md, train, mediators, mreg)
    response_fit = ols(_columns(train, yreg, "regressor"), train.column(response), names=yreg)
    return CausalFit(train, features, confounders, mediators, response, response_fit, mediator_fits)


def generate_cf_response(fit: CausalFit, data: Dataset | None = None,
                         target=PathTarget.DIRECT) -> np.ndarray:
    """Counterfactual response column; ``data`` must be fully labeled."""
    target = PathTarget.parse(target)
    data = fit.train if data is None else data
    if not data.has(Y):
        raise MissingColumnError("counterfactual responses need the observed response")
    if target is PathTarget.INDIRECT and not fit.mediators:
        raise InputError("indirect target needs mediators")
    if target is PathTarget.CONFOUNDING and not fit.confounders:
        raise InputError("confounding target needs at least one confounder")
    _require_same(data.names_of(X), fit.features, "feature")
    xv = _columns(data, fit.features, "feature")
    cv = _columns(data, fit.confounders, "confounder")
    mv = _columns(data, fit.mediators, "mediator")
    y = data.column(fit.response)
    # the intercept stays in W_Y so the direct form equals Y - G_yc C - G_ym M
    w_y = y - cv @ fit.gamma_yc - mv @ fit.gamma_ym - xv @ fit.gamma_yx
    if target is PathTarget.DIRECT:
        return xv @ fit.gamma_yx + w_y
    if target is PathTarget.INDIRECT:
        m_star = mv - cv @ fit.gamma_mc.T
        return m_star @ fit.gamma_ym + w_y
    return cv @ fit.gamma_yc + w_y


# edges removed from the model to obtain the counterfactual mechanism
_DELETED = {
    (Task.ANTICAUSAL, PathTarget.DIRECT): (("X", "C"), ("X", "M")),
    (Task.ANTICAUSAL, PathTarget.INDIRECT): (("X", "C"), ("X", "Y"), ("M", "C")),
    (Task.ANTICAUSAL, PathTarget.CONFOUNDING): (("X", "M"), ("X", "Y")),
    (Task.CAUSAL, PathTarget.DIRECT): (("Y", "C"), ("Y", "M")),
    (Task.CAUSAL, PathTarget.INDIRECT): (("Y", "C"), ("Y", "X"), ("M", "C")),
    (Task.CAUSAL, PathTarget.CONFOUNDING): (("Y", "M"), ("Y", "X")),
}


def intervened_scm(scm: LinearScm, target) -> LinearScm:
    """Counterfactual model: same errors, with the mechanisms outside the target deleted.

    In the returned model the feature (anticausal) or response (causal)
    variables are the counterfactual ones, and mediators are replaced by
    their counterfactual versions for the indirect target.
    """
    target = PathTarget.parse(target)
    validate(scm)
    theta = np.array(scm.theta)
    for child, parent in _DELETED[(scm.task, target)]:
        theta[np.ix_(scm.index(_ROLE[child]), scm.index(_ROLE[parent]))] = 0.0
    return scm.with_theta(theta)


_ROLE = {"X": X, "C": C, "M": M, "Y": Y}


def population_cf_covariance(scm: LinearScm, target) -> np.ndarray:
    """Closed-form covariance carried by the counterfactual construction.

    Anticausal (vector of ``Cov(X*_j, Y)``): direct ``G_XY Var(Y)``, indirect
    ``G_XM G_MY Var(Y)``, confounding ``G_XC Cov(C) G_YC^T``.
    Causal (vector of ``Cov(Y*, X_j)``): direct ``G_YX Cov(X)``, indirect
    ``G_YM G_MX Cov(X)``, confounding ``G_YC Cov(C) G_XC^T``.
    """
    target = PathTarget.parse(target)
    require_block_independent(scm)
    g = reparameterize(scm).gamma
    _, cov = implied_moments(scm)
    cov_c = scm.block(cov, C, C)
    if scm.task is Task.ANTICAUSAL:
        var_y = float(scm.block(cov, Y, Y)[0, 0])
        if target is PathTarget.DIRECT:
            out = g["XY"] * var_y
        elif target is PathTarget.INDIRECT:
            out = g["XM"] @ g["MY"] * var_y
        else:
            out = g["XC"] @ cov_c @ g["YC"].T
        return out[:, 0]
    cov_x = scm.block(cov, X, X)
    if target is PathTarget.DIRECT:
        out = g["YX"] @ cov_x
    elif target is PathTarget.INDIRECT:
        out = g["YM"] @ g["MX"] @ cov_x
    else:
        out = g["YC"] @ cov_c @ g["XC"].T
    return out[0, :]


def _is_standardized(scm: LinearScm, tol: float = 1e-9) -> bool:
    _, cov = implied_moments(scm)
    return bool(np.all(np.abs(np.diag(cov) - 1.0) <= tol))


def altered_y_covariance(scm: LinearScm, variant: str) -> float:
    """``Cov(X*, Y*)`` under interventions that also alter the response.

    ``fix_confounder`` holds the confounder at a constant; ``cut_confounder_to_y``
    deletes the ``C -> Y`` edge. Both shrink the direct-path covariance to
    ``theta_XY (1 - theta_YC^2)`` in a standardized model, so neither recovers
    ``theta_XY``. Defined for standardized anticausal models with one feature,
    one confounder and no mediator.
    """
    if scm.task is not Task.ANTICAUSAL:
        raise InputError("altered_y_covariance is defined for anticausal tasks")
    if scm.count(X) != 1 or scm.count(C) != 1 or scm.count(M) != 0:
        raise InputError("needs exactly one feature, one confounder and no mediator")
    require_block_independent(scm)
    if not _is_standardized(scm):
        raise InputError("model is not standardized (implied variances must be 1)")
    theta = np.array(scm.theta)
    err = np.array(scm.error_cov)
    ci = scm.index(C)[0]
    yi = scm.index(Y)[0]
    xi = scm.index(X)[0]
    if variant == "fix_confounder":
        err[ci, :] = 0.0
        err[:, ci] = 0.0
        theta[ci, :] = 0.0
    elif variant == "cut_confounder_to_y":
        theta[yi, ci] = 0.0
    else:
        raise InputError(f"unknown variant {variant!r}")
    altered = LinearScm(scm.names, scm.roles, theta, scm.mu, err, scm.task)
    _, cov = implied_moments(altered)
    return float(cov[xi, yi])
