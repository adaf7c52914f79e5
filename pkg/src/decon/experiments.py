"""Dataset-shift stability experiments and the expected-MSE calculator.

Data follow ``C = U_C``, ``Y = b_YC C + U_Y``, ``X_j = b_XjY Y + b_XjC C + U_Xj``
with ``(U_C, U_Y)`` bivariate normal and ``U_X`` AR(1)-correlated. The error
covariance of ``(U_C, U_Y)`` is solved so that ``(Var C, Cov(Y, C), Var Y)``
hit prescribed values, which is how shifts in ``P(C, Y)`` are produced.
"""
from __future__ import annotations

import csv
import io as _io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from . import rng as _rng
from .counterfactual import algorithm1_adjust
from .errors import DeconError, InputError, ParamSearchError, PsdError, SchemaError, ShapeError
from .regression import ols
from .scm import Dataset, LinearScm, Role, Task, propagate, simulate

COV_GRID = (0.8, 0.6, 0.4, 0.2, 0.0, -0.2, -0.4, -0.6, -0.8)
VAR_GRID = (1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0)
MAX_RETRIES = 100


@dataclass(frozen=True)
class MomentSpec:
    var_c: float
    cov_yc: float
    var_y: float

    def __post_init__(self):
        if not (self.var_c > 0 and self.var_y > 0):
            raise InputError("var_c and var_y must be positive")
        if self.var_c * self.var_y - self.cov_yc ** 2 <= 0:
            raise InputError(f"moments {self} are not positive definite")


TRAIN_MOMENTS = MomentSpec(1.0, 0.8, 1.0)


def solve_error_moments(spec: MomentSpec, beta_yc: float, form: str = "exact"):
    """Error moments ``(phi_CC, phi_CY, phi_YY)`` reproducing ``spec`` for a given ``beta_yc``.

    ``form="exact"`` inverts ``Var(Y) = b^2 phi_CC + phi_YY + 2 b phi_CY``, which gives
    ``phi_YY = Var(Y) + b^2 Var(C) - 2 b Cov(Y, C)``; its determinant equals that
    of the moment matrix, so it is always PSD for a valid spec.
    ``form="printed"`` uses ``phi_YY = Var(Y) - b^2 Var(C) - 2 b Cov(Y, C)``, which
    does not reproduce ``Var(Y)`` and is frequently indefinite; kept for comparison.
    """
    b = float(beta_yc)
    phi_cc = spec.var_c
    phi_cy = spec.cov_yc - b * spec.var_c
    if form == "exact":
        phi_yy = spec.var_y + b * b * spec.var_c - 2 * b * spec.cov_yc
    elif form == "printed":
        phi_yy = spec.var_y - b * b * spec.var_c - 2 * b * spec.cov_yc
    else:
        raise InputError(f"unknown form {form!r}")
    if phi_yy < 0 or phi_cc * phi_yy - phi_cy ** 2 < -1e-12:
        raise PsdError(f"error covariance ({phi_cc}, {phi_cy}, {phi_yy}) is not PSD "
                       f"for beta_yc={b}")
    return phi_cc, phi_cy, phi_yy


def ar1_error_cov(p: int, rho: float) -> np.ndarray:
    if not abs(rho) < 1:
        raise InputError(f"|rho| must be < 1, got {rho}")
    idx = np.arange(p)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :])


@dataclass(frozen=True)
class ReplicationParams:
    beta_xy: np.ndarray
    beta_xc: np.ndarray
    beta_yc: float
    rho: float
    rejected: int = 0

    @property
    def p(self) -> int:
        return self.beta_xy.size


def sample_replication_params(seed: int, n_features: int = 10, check=(), form: str = "exact",
                              max_retries: int = MAX_RETRIES) -> ReplicationParams:
    """Draw ``b ~ U(-1, 1)`` and ``rho ~ U(-0.5, 0.5)``.

    The whole draw is repeated from a fresh sub-stream while any MomentSpec in
    ``check`` yields a non-PSD error covariance; ``rejected`` counts the
    discarded draws.
    """
    for attempt in range(max_retries + 1):
        gen = _rng.generator(seed, "params", attempt)
        beta_xy = gen.uniform(-1.0, 1.0, n_features)
        beta_xc = gen.uniform(-1.0, 1.0, n_features)
        beta_yc = float(gen.uniform(-1.0, 1.0))
        rho = float(gen.uniform(-0.5, 0.5))
        try:
            for spec in check:
                solve_error_moments(spec, beta_yc, form)
        except PsdError:
            continue
        return ReplicationParams(beta_xy, beta_xc, beta_yc, rho, attempt)
    raise ParamSearchError(f"no valid parameter draw after {max_retries} retries")


def feature_names(p: int) -> list:
    return [f"X{j + 1}" for j in range(p)]


def experiment_scm(params: ReplicationParams, moments: MomentSpec, form: str = "exact") -> LinearScm:
    """The generative model with variables ordered ``C, Y, X1..Xp``."""
    p = params.p
    phi_cc, phi_cy, phi_yy = solve_error_moments(moments, params.beta_yc, form)
    theta = np.zeros((p + 2, p + 2))
    theta[1, 0] = params.beta_yc
    theta[2:, 1] = params.beta_xy
    theta[2:, 0] = params.beta_xc
    err = np.zeros((p + 2, p + 2))
    err[:2, :2] = [[phi_cc, phi_cy], [phi_cy, phi_yy]]
    err[2:, 2:] = ar1_error_cov(p, params.rho)
    names = ["C", "Y"] + feature_names(p)
    roles = [Role.CONFOUNDER, Role.RESPONSE] + [Role.FEATURE] * p
    return LinearScm(names, roles, theta, np.zeros(p + 2), err, Task.ANTICAUSAL)


def generate_training_sets(params: ReplicationParams, moments: MomentSpec, n: int, seed: int,
                           form: str = "exact", baseline2: str = "independent") -> dict:
    """Confounded, baseline-1 and baseline-2 training sets from one error draw.

    Baseline 1 drops the ``C -> X`` effects. Baseline 2 drops ``C -> Y``; with
    ``baseline2="independent"`` its response is the part of ``U_Y`` orthogonal
    to ``U_C`` (so ``Y`` is independent of ``C``), with ``"literal"`` it is
    ``U_Y`` itself, which stays correlated with ``C`` through ``phi_CY``.
    """
    scm = experiment_scm(params, moments, form)
    confounded, u = simulate(scm, n, seed, tag="train", return_errors=True)
    t1 = np.array(scm.theta)
    t1[2:, 0] = 0.0
    t2 = np.array(scm.theta)
    t2[1, 0] = 0.0
    u2 = np.array(u)
    if baseline2 == "independent":
        u2[:, 1] -= scm.error_cov[0, 1] / scm.error_cov[0, 0] * u[:, 0]
    elif baseline2 != "literal":
        raise InputError(f"unknown baseline2 mode {baseline2!r}")
    return {
        "confounded": confounded,
        "baseline1": Dataset(scm.names, scm.roles, propagate(scm.with_theta(t1), u), "simulated"),
        "baseline2": Dataset(scm.names, scm.roles, propagate(scm.with_theta(t2), u2), "simulated"),
    }


def generate_test_set(params: ReplicationParams, moments: MomentSpec, n: int, seed: int,
                      index: int, form: str = "exact") -> Dataset:
    return simulate(experiment_scm(params, moments, form), n, seed, tag=f"test_{index}")


def expected_mse_analytic(weights, params: ReplicationParams, test_moments: MomentSpec,
                          adjusted_test: bool, adjustment=None) -> float:
    """Population MSE of ``b0 + w'X`` on a (possibly adjusted) shifted test set.

    ``E[MSE] = Var(Y) + w' Cov(X) w - 2 w' Cov(X, Y) + b0^2`` (all means are 0).
    With ``adjusted_test`` the features are ``X - b_XC C`` and the moments depend
    on ``Var(Y)`` only. ``adjustment`` replaces the true ``b_XC`` by an estimate,
    leaving the residual ``(b_XC - estimate) C`` in the features.
    ``weights`` has length p (no intercept) or p + 1 (intercept first).
    """
    w = np.asarray(weights, dtype=float).ravel()
    p = params.p
    if w.size == p + 1:
        b0, w = float(w[0]), w[1:]
    elif w.size == p:
        b0 = 0.0
    else:
        raise ShapeError(f"weights must have length {p} or {p + 1}, got {w.size}")
    by = params.beta_xy
    vy, vc, cyc = test_moments.var_y, test_moments.var_c, test_moments.cov_yc
    if adjusted_test and adjustment is None:
        bc = np.zeros(p)
    elif adjusted_test:
        bc = params.beta_xc - np.asarray(adjustment, dtype=float)
    else:
        bc = params.beta_xc
    s_x = (np.outer(by, by) * vy + np.outer(bc, bc) * vc
           + (np.outer(by, bc) + np.outer(bc, by)) * cyc + ar1_error_cov(p, params.rho))
    s_xy = by * vy + bc * cyc
    return float(vy + w @ s_x @ w - 2 * w @ s_xy + b0 * b0)


class Variant(str, Enum):
    FIXED_VAR_Y = "fixed-vary"
    INCREASING_VAR_Y = "increasing-vary"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, Variant):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"fixedvary": "fixed-vary", "increasingvary": "increasing-vary",
                   "fixed": "fixed-vary", "increasing": "increasing-vary"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise InputError(f"unknown experiment variant {value!r}") from None


class AdjustmentMethod(str, Enum):
    CAUSALITY_AWARE = "CausalityAware"
    BASELINE1 = "Baseline1"
    BASELINE2 = "Baseline2"
    NO_ADJUSTMENT = "NoAdjustment"


METHODS = tuple(AdjustmentMethod)


def grid_for(variant) -> list:
    variant = Variant.parse(variant)
    if variant is Variant.FIXED_VAR_Y:
        return [MomentSpec(v, c, 1.0) for c, v in zip(COV_GRID, VAR_GRID)]
    return [MomentSpec(1.0, c, v) for c, v in zip(COV_GRID, VAR_GRID)]


@dataclass(frozen=True)
class ExperimentConfig:
    variant: Variant = Variant.FIXED_VAR_Y
    n_features: int = 10
    n_train: int = 1000
    n_test: int = 1000
    n_reps: int = 1000
    base_seed: int = 0
    train_moments: MomentSpec = TRAIN_MOMENTS
    test_grid: tuple = ()
    methods: tuple = METHODS
    score: str = "empirical"
    phi_form: str = "exact"
    baseline2: str = "independent"
    recenter: bool = False
    max_retries: int = MAX_RETRIES

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        grid = tuple(self.test_grid) or tuple(grid_for(self.variant))
        if len(grid) != 9:
            raise InputError(f"test grid must have 9 moment specs, got {len(grid)}")
        object.__setattr__(self, "test_grid", grid)
        object.__setattr__(self, "methods", tuple(AdjustmentMethod(m) for m in self.methods))
        if self.score not in ("empirical", "analytic"):
            raise InputError(f"score must be 'empirical' or 'analytic', got {self.score!r}")
        if self.n_reps < 1:
            raise InputError("n_reps must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["methods"] = [m.value for m in self.methods]
        d["train_moments"] = asdict(self.train_moments)
        d["test_grid"] = [asdict(s) for s in self.test_grid]
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"unknown config keys {sorted(unknown)}")
        if "train_moments" in doc:
            doc["train_moments"] = MomentSpec(**doc["train_moments"])
        if "test_grid" in doc:
            doc["test_grid"] = tuple(MomentSpec(**s) for s in doc["test_grid"])
        return cls(**doc)


def _fit_predictor(train: Dataset):
    return ols(train.columns(Role.FEATURE), train.response)


def _mse(fit, test: Dataset) -> float:
    resid = test.response - fit.predict(test.columns(Role.FEATURE))
    return float(np.mean(resid * resid))


def run_replication(rep: int, config: ExperimentConfig) -> tuple:
    """Run one replication.

    Returns ``(records, rejected)``: ``(replication, method, test_index, mse)``
    tuples and the number of discarded parameter draws.
    """
    seed = _rng.derive_seed(config.base_seed, "rep", rep)
    check = (config.train_moments,) + tuple(config.test_grid)
    params = sample_replication_params(seed, config.n_features, check, config.phi_form,
                                       config.max_retries)
    trains = generate_training_sets(params, config.train_moments, config.n_train, seed,
                                    config.phi_form, config.baseline2)
    analytic = config.score == "analytic"
    tests = [] if analytic else [
        generate_test_set(params, spec, config.n_test, seed, k + 1, config.phi_form)
        for k, spec in enumerate(config.test_grid)]

    records = []
    for method in config.methods:
        if method is AdjustmentMethod.CAUSALITY_AWARE:
            if analytic:
                train_star, _ = algorithm1_adjust(trains["confounded"], [])
                scored = None
            else:
                train_star, scored = algorithm1_adjust(trains["confounded"], tests,
                                                       recenter=config.recenter)
            fit = _fit_predictor(train_star)
            adjusted = True
        else:
            key = {AdjustmentMethod.BASELINE1: "baseline1", AdjustmentMethod.BASELINE2: "baseline2",
                   AdjustmentMethod.NO_ADJUSTMENT: "confounded"}[method]
            fit = _fit_predictor(trains[key])
            scored = tests
            adjusted = False
        for k, spec in enumerate(config.test_grid):
            if analytic:
                w = np.concatenate([[fit.intercept], fit.coefficients])
                mse = expected_mse_analytic(w, params, spec, adjusted_test=adjusted)
            else:
                mse = _mse(fit, scored[k])
            records.append((rep, method.value, k + 1, mse))
    return records, params.rejected


def default_threads() -> int:
    import os
    env = os.environ.get("DECON_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"DECON_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass
class ResultsTable:
    records: pd.DataFrame
    rejected_draws: int = 0
    failed: list = field(default_factory=list)

    def stability(self) -> pd.DataFrame:
        """Standard deviation (ddof=1) of each replication/method's MSE across test sets."""
        if self.records.empty:
            return pd.DataFrame(columns=["replication", "method", "stability_error"])
        g = self.records.groupby(["replication", "method"], sort=False)["mse"]
        out = g.std(ddof=1).rename("stability_error").reset_index()
        return out

    def median_mse(self) -> pd.DataFrame:
        return self.records.pivot_table(index="method", columns="test_index", values="mse",
                                        aggfunc="median", sort=False)

    def median_stability(self) -> pd.Series:
        return self.stability().groupby("method", sort=False)["stability_error"].median()

    def sign_test(self, reference=AdjustmentMethod.CAUSALITY_AWARE) -> dict:
        """One-sided sign test that ``reference`` has the smaller stability error."""
        st = self.stability().pivot(index="replication", columns="method", values="stability_error")
        ref = AdjustmentMethod(reference).value
        out = {}
        for other in st.columns:
            if other == ref:
                continue
            diff = (st[other] - st[ref]).to_numpy()
            diff = diff[diff != 0]
            wins = int((diff > 0).sum())
            p = binomtest(wins, diff.size, 0.5, alternative="greater").pvalue if diff.size else 1.0
            out[other] = {"wins": wins, "n": int(diff.size), "p_value": float(p)}
        return out

    def summary_text(self) -> str:
        med = self.median_mse()
        lines = ["median MSE by method and test set"]
        lines.append("method".ljust(16) + "".join(f"{k:>9}" for k in med.columns))
        for m, row in med.iterrows():
            lines.append(str(m).ljust(16) + "".join(f"{v:9.4f}" for v in row.to_numpy()))
        lines.append("")
        lines.append("median stability_error")
        for m, v in self.median_stability().items():
            lines.append(f"{str(m).ljust(16)}{v:9.4f}")
        return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> ResultsTable:
    """All replications, keyed by index so the result ignores scheduling."""
    threads = default_threads() if threads is None else max(1, int(threads))

    def one(rep):
        try:
            return rep, run_replication(rep, config), None
        except DeconError as exc:
            return rep, None, f"{type(exc).__name__}: {exc}"

    if threads == 1:
        outcomes = [one(r) for r in range(config.n_reps)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, range(config.n_reps)))
    rows, failed, rejected = [], [], 0
    for rep, res, err in outcomes:
        if err is not None:
            failed.append({"replication": rep, "error": err})
            continue
        recs, rej = res
        rows.extend(recs)
        rejected += rej
    df = pd.DataFrame(rows, columns=["replication", "method", "test_index", "mse"])
    return ResultsTable(df, rejected, failed)


RESULTS_FILE = "results.csv"
STABILITY_FILE = "stability.csv"
METADATA_FILE = "metadata.json"


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_results(table: ResultsTable, config: ExperimentConfig, out_dir, version: str) -> dict:
    """Write results, stability and metadata files; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec = table.records
    rows = [(int(r), str(m), int(k), float(v)) for r, m, k, v in rec.itertuples(index=False)]
    (out / RESULTS_FILE).write_text(_csv_text(["replication", "method", "test_index", "mse"], rows))
    st = table.stability()
    srows = [(int(r), str(m), float(v)) for r, m, v in st.itertuples(index=False)]
    (out / STABILITY_FILE).write_text(_csv_text(["replication", "method", "stability_error"], srows))
    meta = {
        "version": version,
        "config": config.to_dict(),
        "rejected_draws": table.rejected_draws,
        "failed_replications": table.failed,
        "completed_replications": int(rec["replication"].nunique()) if not rec.empty else 0,
    }
    (out / METADATA_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return {"results": out / RESULTS_FILE, "stability": out / STABILITY_FILE,
            "metadata": out / METADATA_FILE}


def read_results(path) -> pd.DataFrame:
    """Load a results CSV (or a directory holding one) and check its columns."""
    path = Path(path)
    if path.is_dir():
        path = path / RESULTS_FILE
    if not path.is_file():
        raise SchemaError(f"results file {path} not found")
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    expected = ["replication", "method", "test_index", "mse"]
    if list(df.columns) != expected:
        raise SchemaError(f"{path}: expected columns {expected}, got {list(df.columns)}")
    if df.empty:
        raise SchemaError(f"{path}: no result rows")
    return df
