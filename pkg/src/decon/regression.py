"""Ordinary least squares via Householder QR."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import InputError, RankError, SampleSizeError, ShapeError

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class OlsFit:
    intercept: float
    coefficients: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    names: tuple
    cov_unscaled: np.ndarray
    with_intercept: bool = True

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    @property
    def df_residual(self) -> int:
        return self.n - self.coefficients.size - int(self.with_intercept)

    @property
    def sigma2(self) -> float:
        return float(self.residuals @ self.residuals) / self.df_residual

    @property
    def std_errors(self) -> np.ndarray:
        """Classical standard errors of ``coefficients`` (intercept excluded)."""
        se = np.sqrt(np.diag(self.cov_unscaled) * self.sigma2)
        return se[1:] if self.with_intercept else se

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def predict(self, design) -> np.ndarray:
        design = np.asarray(design, dtype=float)
        if design.ndim == 1:
            design = design[:, None]
        if design.shape[1] != self.coefficients.size:
            raise ShapeError(f"design has {design.shape[1]} columns, fit has {self.coefficients.size}")
        return self.intercept + design @ self.coefficients


def _prepare(design, n_target: int, names):
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design[:, None]
    n, k = design.shape
    if n_target != n:
        raise ShapeError(f"target has {n_target} rows, design has {n}")
    if n <= k + 1:
        raise SampleSizeError(f"need n > k + 1, got n={n}, k={k}")
    if not np.all(np.isfinite(design)):
        raise InputError("design must be finite")
    names = tuple(f"x{i}" for i in range(k)) if names is None else tuple(names)
    if len(names) != k:
        raise ShapeError(f"{len(names)} names for {k} regressors")
    return design, names


def ols_many(design, targets, with_intercept: bool = True, names=None) -> list:
    """Fit every column of ``targets`` (n x t) on the same design, sharing one QR."""
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    design, names = _prepare(design, targets.shape[0], names)
    if not np.all(np.isfinite(targets)):
        raise InputError("target must be finite")
    n = design.shape[0]
    a = np.column_stack([np.ones(n), design]) if with_intercept else design
    q, r = qr(a, mode="economic", check_finite=False)
    # singular values of R equal those of the design
    sv = np.linalg.svd(r, compute_uv=False)
    if sv.size == 0 or sv[-1] < RANK_RTOL * sv[0]:
        raise RankError(f"design is rank deficient (singular values {sv[-1]:.3g} / {sv[0]:.3g})")
    beta = solve_triangular(r, q.T @ targets)
    # column-major so each target's fitted values and residuals are contiguous
    fitted = (beta.T @ a.T).T
    resid = targets - fitted
    r_inv = solve_triangular(r, np.eye(r.shape[0]))
    cov = r_inv @ r_inv.T
    fits = []
    for j in range(targets.shape[1]):
        b = beta[:, j]
        intercept, coefs = (float(b[0]), b[1:]) if with_intercept else (0.0, b)
        fits.append(OlsFit(intercept, coefs, resid[:, j], fitted[:, j],
                           names, cov, with_intercept))
    return fits


def ols(design, target, with_intercept: bool = True, names=None) -> OlsFit:
    """Least-squares fit of ``target`` on the columns of ``design``.

    Raises SampleSizeError unless ``n > k + 1`` and RankError when the
    (intercept-augmented) design has condition number above ``1 / RANK_RTOL``.
    """
    target = np.asarray(target, dtype=float).ravel()
    return ols_many(design, target[:, None], with_intercept, names)[0]
