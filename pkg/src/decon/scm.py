"""Linear structural causal models.

A model is stored densely: ``theta[k, j]`` is the path coefficient of the
edge ``Z_j -> Z_k``, ``mu`` the intercepts and ``error_cov`` the covariance of
the exogenous errors, so that ``Z = theta @ Z + mu + U``.

Each variable carries a :class:`Role`. The prediction ``task`` fixes which
role pairs may be joined by an edge:

* anticausal: ``C -> Y``, ``C -> M``, ``Y -> M``, ``C/M/Y -> X``
* causal: ``C -> X``, ``C/X -> M``, ``C/M/X -> Y``

plus edges inside the confounder, mediator and feature blocks.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from . import rng as _rng
from .errors import CycleError, InputError, MissingColumnError, PsdError, RoleError, ShapeError

TOL_PSD = 1e-10


class Role(str, Enum):
    FEATURE = "feature"
    CONFOUNDER = "confounder"
    MEDIATOR = "mediator"
    RESPONSE = "response"

    @property
    def letter(self) -> str:
        return _LETTERS[self]

    @classmethod
    def parse(cls, value) -> "Role":
        if isinstance(value, Role):
            return value
        key = str(value).strip().lower()
        for role in cls:
            if key in (role.value, role.letter.lower()):
                return role
        raise RoleError(f"unknown role {value!r}")


_LETTERS = {
    Role.FEATURE: "X",
    Role.CONFOUNDER: "C",
    Role.MEDIATOR: "M",
    Role.RESPONSE: "Y",
}
_BY_LETTER = {v: k for k, v in _LETTERS.items()}


class Task(str, Enum):
    ANTICAUSAL = "anticausal"
    CAUSAL = "causal"


X, C, M, Y = Role.FEATURE, Role.CONFOUNDER, Role.MEDIATOR, Role.RESPONSE

# child role -> roles allowed as parents
ALLOWED_PARENTS = {
    Task.ANTICAUSAL: {C: {C}, Y: {C}, M: {M, C, Y}, X: {X, C, M, Y}},
    Task.CAUSAL: {C: {C}, X: {X, C}, M: {M, C, X}, Y: {C, M, X}},
}

# (child, parent) blocks of the reparameterized model, per task
GAMMA_BLOCKS = {
    Task.ANTICAUSAL: ("YC", "MC", "MY", "XC", "XM", "XY"),
    Task.CAUSAL: ("XC", "MC", "MX", "YC", "YM", "YX"),
}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearScm:
    names: tuple
    roles: tuple
    theta: np.ndarray
    mu: np.ndarray
    error_cov: np.ndarray
    task: Task = Task.ANTICAUSAL

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        roles = tuple(Role.parse(r) for r in self.roles)
        p = len(names)
        if len(set(names)) != p:
            raise InputError("variable names must be unique")
        if len(roles) != p:
            raise ShapeError(f"{len(roles)} roles for {p} variables")
        theta = _frozen(self.theta)
        mu = _frozen(np.zeros(p) if self.mu is None else self.mu)
        error_cov = _frozen(self.error_cov)
        if theta.shape != (p, p):
            raise ShapeError(f"theta has shape {theta.shape}, expected {(p, p)}")
        if mu.shape != (p,):
            raise ShapeError(f"mu has shape {mu.shape}, expected {(p,)}")
        if error_cov.shape != (p, p):
            raise ShapeError(f"error_cov has shape {error_cov.shape}, expected {(p, p)}")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(mu))
                and np.all(np.isfinite(error_cov))):
            raise InputError("model parameters must be finite")
        n_y = sum(r is Y for r in roles)
        if n_y != 1:
            raise RoleError(f"exactly one response variable required, got {n_y}")
        if not any(r is X for r in roles):
            raise RoleError("at least one feature required")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "error_cov", error_cov)
        object.__setattr__(self, "task", Task(self.task))

    @property
    def p(self) -> int:
        return len(self.names)

    def index(self, role) -> np.ndarray:
        role = Role.parse(role)
        return np.array([i for i, r in enumerate(self.roles) if r is role], dtype=int)

    def names_of(self, role) -> list:
        return [self.names[i] for i in self.index(role)]

    def count(self, role) -> int:
        return len(self.index(role))

    def position(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InputError(f"no variable named {name!r}") from None

    def block(self, matrix, child, parent) -> np.ndarray:
        """Sub-block ``matrix[child rows, parent cols]`` by role letters or roles."""
        ci = self.index(_role_of(child))
        pi = self.index(_role_of(parent))
        return np.asarray(matrix)[np.ix_(ci, pi)]

    def coefficient(self, child: str, parent: str) -> float:
        return float(self.theta[self.position(child), self.position(parent)])

    def with_theta(self, theta) -> "LinearScm":
        return replace(self, theta=theta)


def _role_of(key) -> Role:
    if isinstance(key, Role):
        return key
    if key in _BY_LETTER:
        return _BY_LETTER[key]
    return Role.parse(key)


def _edge_str(scm: LinearScm, child: int, parent: int) -> str:
    return (f"{scm.names[parent]} -> {scm.names[child]} "
            f"({scm.roles[parent].value} -> {scm.roles[child].value})")


def _check_roles(scm: LinearScm) -> None:
    allowed = ALLOWED_PARENTS[scm.task]
    rows, cols = np.nonzero(scm.theta)
    for k, j in zip(rows, cols):
        if k == j:
            continue
        if scm.roles[j] not in allowed[scm.roles[k]]:
            raise RoleError(f"illegal edge {_edge_str(scm, k, j)} for a {scm.task.value} task")


def _topological_order(scm: LinearScm) -> np.ndarray:
    adj = scm.theta != 0
    diag = np.flatnonzero(np.diag(adj))
    if diag.size:
        name = scm.names[diag[0]]
        raise CycleError(f"cycle: self-loop on {name}")
    indeg = adj.sum(axis=1)
    ready = [i for i in range(scm.p) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        j = heapq.heappop(ready)
        order.append(j)
        for k in np.flatnonzero(adj[:, j]):
            indeg[k] -= 1
            if indeg[k] == 0:
                heapq.heappush(ready, int(k))
    if len(order) != scm.p:
        stuck = [scm.names[i] for i in range(scm.p) if i not in set(order)]
        raise CycleError(f"cycle among variables {stuck}")
    return np.array(order, dtype=int)


def check_psd(cov, tol: float = TOL_PSD, what: str = "error_cov") -> np.ndarray:
    """Return eigenvalues of a symmetric matrix, raising PsdError if one is below ``-tol``."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ShapeError(f"{what} must be square")
    scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * scale):
        raise PsdError(f"{what} is not symmetric")
    if cov.size == 0:
        return np.zeros(0)
    eig = np.linalg.eigvalsh(cov)
    if eig[0] < -tol:
        raise PsdError(f"{what} is not positive semidefinite (min eigenvalue {eig[0]:.3g})")
    return eig


def validate(scm: LinearScm, tol_psd: float = TOL_PSD) -> list:
    """Check legality, acyclicity and PSD errors; return the variable names in topological order.

    In the returned order ``theta`` is strictly lower triangular, hence
    ``I - theta`` is unit lower triangular and invertible.
    """
    _check_roles(scm)
    order = _topological_order(scm)
    check_psd(scm.error_cov, tol_psd)
    return [scm.names[i] for i in order]


def topological_indices(scm: LinearScm) -> np.ndarray:
    validate(scm)
    return _topological_order(scm)


def structural_inverse(scm: LinearScm) -> np.ndarray:
    """``(I - theta)^-1`` via a unit-triangular solve in topological order."""
    order = topological_indices(scm)
    a = np.eye(scm.p) - scm.theta[np.ix_(order, order)]
    inv_perm = solve_triangular(a, np.eye(scm.p), lower=True, unit_diagonal=True)
    out = np.empty_like(inv_perm)
    out[np.ix_(order, order)] = inv_perm
    return out


def implied_moments(scm: LinearScm):
    """Population mean vector and covariance matrix of all variables."""
    b = structural_inverse(scm)
    mean = b @ scm.mu
    cov = b @ scm.error_cov @ b.T
    return mean, 0.5 * (cov + cov.T)


def propagate(scm: LinearScm, errors) -> np.ndarray:
    """Solve ``Z = theta Z + mu + U`` row-wise for a given ``n x p`` error table."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 2 or errors.shape[1] != scm.p:
        raise ShapeError(f"errors must be n x {scm.p}")
    # (I - theta)^-1 comes from the triangular solve; applying it is one matmul.
    # Working on the transpose leaves the result column-major, which keeps
    # per-variable column access cheap.
    return (structural_inverse(scm) @ (errors.T + scm.mu[:, None])).T


def sampling_factor(cov, tol: float = TOL_PSD) -> np.ndarray:
    """Square-root factor ``F`` with ``F F^T = cov``; tiny negative eigenvalues are clipped."""
    cov = np.asarray(cov, dtype=float)
    eig = check_psd(cov, tol)
    _, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(eig, 0.0, None))


def draw_errors(cov, n: int, gen: np.random.Generator) -> np.ndarray:
    f = sampling_factor(cov)
    return (f @ gen.standard_normal((f.shape[0], n))).T


def simulate(scm: LinearScm, n: int, seed: int, tag: str = "simulate",
             return_errors: bool = False):
    """Draw ``n`` samples with Gaussian errors.

    The stream depends only on ``(seed, tag)``. With ``return_errors=True``
    the exogenous draws are returned too, as ``(dataset, errors)``.
    """
    if int(n) < 1:
        raise InputError(f"sample count must be >= 1, got {n}")
    validate(scm)
    u = draw_errors(scm.error_cov, int(n), _rng.generator(seed, tag))
    z = propagate(scm, u)
    z.setflags(write=False)
    data = Dataset(scm.names, scm.roles, z, "simulated")
    return (data, u) if return_errors else data


@dataclass(frozen=True, eq=False)
class ReparameterizedScm:
    """Block effects ``gamma`` and correlated errors ``W`` of a model.

    ``gamma`` maps two-letter block keys (child then parent, e.g. ``"XY"``) to
    2-D coefficient arrays; ``w_cov`` maps role letters to the covariance of
    the corresponding ``W`` block, and ``w_cov_full`` is ``Cov(W)`` in the
    original variable order.
    """

    scm: LinearScm
    gamma: dict
    w_cov: dict
    w_cov_full: np.ndarray
    transform: np.ndarray = field(repr=False)

    def effect_matrix(self) -> np.ndarray:
        """``p x p`` matrix holding every gamma block at its original positions."""
        g = np.zeros((self.scm.p, self.scm.p))
        for key, block in self.gamma.items():
            ci = self.scm.index(_role_of(key[0]))
            pi = self.scm.index(_role_of(key[1]))
            g[np.ix_(ci, pi)] = block
        return g

    def implied_covariance(self) -> np.ndarray:
        g = self.effect_matrix()
        b = np.linalg.inv(np.eye(self.scm.p) - g)
        cov = b @ self.w_cov_full @ b.T
        return 0.5 * (cov + cov.T)


def reparameterize(scm: LinearScm) -> ReparameterizedScm:
    """Push within-block structure into correlated errors.

    ``Gamma_ZV = (I - Theta_ZZ)^-1 Theta_ZV`` and
    ``W_V = (I - Theta_VV)^-1 U_V``; the response block is unchanged.
    """
    validate(scm)
    p = scm.p
    transform = np.zeros((p, p))  # block diagonal (I - Theta_VV)^-1
    inv = {}
    for role in Role:
        idx = scm.index(role)
        if idx.size == 0:
            inv[role.letter] = np.zeros((0, 0))
            continue
        sub = scm.block(scm.theta, role, role)
        b = np.linalg.solve(np.eye(idx.size) - sub, np.eye(idx.size))
        inv[role.letter] = b
        transform[np.ix_(idx, idx)] = b
    gamma = {}
    for key in GAMMA_BLOCKS[scm.task]:
        child, parent = key
        gamma[key] = inv[child] @ scm.block(scm.theta, child, parent)
    w_full = transform @ scm.error_cov @ transform.T
    w_full = 0.5 * (w_full + w_full.T)
    w_cov = {r.letter: scm.block(w_full, r, r) for r in Role}
    return ReparameterizedScm(scm, gamma, w_cov, _frozen(w_full), _frozen(transform))


def errors_block_independent(scm: LinearScm, atol: float = 0.0) -> bool:
    """True when error covariances between different role blocks vanish."""
    for a in Role:
        for b in Role:
            if a is b:
                continue
            blk = scm.block(scm.error_cov, a, b)
            if blk.size and np.max(np.abs(blk)) > atol:
                return False
    return True


def require_block_independent(scm: LinearScm) -> None:
    if not errors_block_independent(scm):
        raise InputError("closed forms assume errors uncorrelated across role blocks")


def total_effects(scm: LinearScm) -> dict:
    """Total effects with mediators marginalized out.

    Anticausal: ``{"XY": G_XY + G_XM G_MY, "XC": G_XC + G_XM G_MC}``.
    Causal: ``{"YX": G_YX + G_YM G_MX, "YC": G_YC + G_YM G_MC}``.
    """
    g = reparameterize(scm).gamma
    if scm.task is Task.ANTICAUSAL:
        return {"XY": g["XY"] + g["XM"] @ g["MY"], "XC": g["XC"] + g["XM"] @ g["MC"]}
    return {"YX": g["YX"] + g["YM"] @ g["MX"], "YC": g["YC"] + g["YM"] @ g["MC"]}


@dataclass(frozen=True)
class CovarianceDecomposition:
    direct: np.ndarray
    indirect: np.ndarray
    confounding_direct: np.ndarray
    confounding_via_m: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.direct + self.indirect + self.confounding_direct + self.confounding_via_m


def covariance_decomposition(scm: LinearScm) -> CovarianceDecomposition:
    """Split ``Cov(X, Y)`` by path family (anticausal tasks).

    Requires errors uncorrelated across role blocks; within a block any
    correlation is fine.
    """
    if scm.task is not Task.ANTICAUSAL:
        raise InputError("covariance_decomposition is defined for anticausal tasks")
    require_block_independent(scm)
    g = reparameterize(scm).gamma
    _, cov = implied_moments(scm)
    var_y = float(scm.block(cov, Y, Y)[0, 0])
    cov_c = scm.block(cov, C, C)
    return CovarianceDecomposition(
        direct=g["XY"][:, 0] * var_y,
        indirect=(g["XM"] @ g["MY"])[:, 0] * var_y,
        confounding_direct=(g["XC"] @ cov_c @ g["YC"].T)[:, 0],
        confounding_via_m=(g["XM"] @ g["MC"] @ cov_c @ g["YC"].T)[:, 0],
    )


def standardize(scm: LinearScm) -> LinearScm:
    """Equivalent model over unit-variance, zero-mean variables.

    ``theta_kj -> theta_kj * sd_j / sd_k`` and ``U_k -> U_k / sd_k``.
    """
    _, cov = implied_moments(scm)
    sd = np.sqrt(np.diag(cov))
    if np.any(sd <= 0):
        raise InputError("cannot standardize a variable with zero variance")
    theta = scm.theta * sd[None, :] / sd[:, None]
    err = scm.error_cov / np.outer(sd, sd)
    return replace(scm, theta=theta, mu=np.zeros(scm.p), error_cov=err)


def standardized_from_paths(names, roles, theta, task=Task.ANTICAUSAL) -> LinearScm:
    """Model with the given path coefficients and independent errors sized for unit variances."""
    p = len(names)
    theta = np.asarray(theta, dtype=float)
    probe = LinearScm(names, roles, theta, np.zeros(p), np.eye(p), task)
    order = topological_indices(probe)
    cov = np.zeros((p, p))
    err = np.zeros(p)
    for k in order:
        w = theta[k]
        explained = float(w @ cov @ w)
        err[k] = 1.0 - explained
        if err[k] < -TOL_PSD:
            raise PsdError(f"path coefficients into {names[k]} explain variance {explained:.4g} > 1")
        err[k] = max(err[k], 0.0)
        # row/col k of the covariance, using already-solved ancestors
        cov[k, :] = w @ cov
        cov[:, k] = cov[k, :]
        cov[k, k] = 1.0
    return LinearScm(names, roles, theta, np.zeros(p), np.diag(err), task)


def random_scm(gen: np.random.Generator, n_x: int = 3, n_c: int = 2, n_m: int = 2,
               task=Task.ANTICAUSAL, density: float = 0.7, scale: float = 0.8,
               correlated_blocks: bool = True) -> LinearScm:
    """Random legal model: edges kept with probability ``density``, coefficients U(-scale, scale).

    Within-block edges follow declaration order; with ``correlated_blocks``
    the error covariance inside each role block gets random correlations.
    Errors are always independent across role blocks.
    """
    task = Task(task)
    names, roles = [], []
    for role, count in ((C, n_c), (Y, 1), (M, n_m), (X, n_x)):
        for i in range(count):
            names.append(role.letter if role is Y else f"{role.letter}{i + 1}")
            roles.append(role)
    p = len(names)
    theta = np.zeros((p, p))
    allowed = ALLOWED_PARENTS[task]
    for k in range(p):
        for j in range(p):
            if roles[j] not in allowed[roles[k]]:
                continue
            if roles[j] is roles[k] and j >= k:
                continue
            if gen.random() < density:
                theta[k, j] = gen.uniform(-scale, scale)
    err = np.zeros((p, p))
    for role in Role:
        idx = [i for i, r in enumerate(roles) if r is role]
        if not idx:
            continue
        sd = gen.uniform(0.6, 1.3, size=len(idx))
        if correlated_blocks and len(idx) > 1:
            a = gen.normal(size=(len(idx), len(idx)))
            s = a @ a.T + len(idx) * np.eye(len(idx))
            d = np.sqrt(np.diag(s))
            corr = s / np.outer(d, d)
        else:
            corr = np.eye(len(idx))
        err[np.ix_(idx, idx)] = corr * np.outer(sd, sd)
    mu = gen.normal(scale=0.5, size=p)
    return LinearScm(names, roles, theta, mu, err, task)


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n x p`` sample table with role-tagged columns."""

    names: tuple
    roles: tuple
    values: np.ndarray
    provenance: str = "simulated"

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        roles = tuple(Role.parse(r) for r in self.roles)
        values = np.asarray(self.values, dtype=float)
        if values.flags.writeable:
            # read-only input is already frozen and can be shared without a copy
            values = values.copy(order="K")
        if values.ndim != 2 or values.shape[1] != len(names) or len(roles) != len(names):
            raise ShapeError(f"values {values.shape} do not match {len(names)} named columns")
        if len(set(names)) != len(names):
            raise InputError("column names must be unique")
        if values.shape[0] < 1:
            raise InputError("dataset needs at least one row")
        if not np.all(np.isfinite(values)):
            raise InputError("dataset contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def index(self, role) -> np.ndarray:
        role = Role.parse(role)
        return np.array([i for i, r in enumerate(self.roles) if r is role], dtype=int)

    def names_of(self, role) -> list:
        return [self.names[i] for i in self.index(role)]

    def has(self, role) -> bool:
        return self.index(role).size > 0

    def columns(self, role) -> np.ndarray:
        return self.values[:, self.index(role)]

    def select(self, names) -> np.ndarray:
        """``n x len(names)`` block of the named columns, in the given order."""
        return self.values[:, [self.names.index(n) for n in names]]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    @property
    def response(self) -> np.ndarray:
        idx = self.index(Y)
        if idx.size != 1:
            raise MissingColumnError("dataset has no response column")
        return self.values[:, idx[0]]

    def with_columns(self, names, new_values, provenance: str | None = None) -> "Dataset":
        """Copy with the named columns overwritten by ``new_values`` (n x len(names))."""
        vals = np.array(self.values)
        new_values = np.asarray(new_values, dtype=float).reshape(self.n, len(names))
        vals[:, [self.names.index(name) for name in names]] = new_values
        vals.setflags(write=False)
        return Dataset(self.names, self.roles, vals,
                       self.provenance if provenance is None else provenance)

    def drop(self, role) -> "Dataset":
        keep = [i for i, r in enumerate(self.roles) if r is not Role.parse(role)]
        return Dataset([self.names[i] for i in keep], [self.roles[i] for i in keep],
                       self.values[:, keep], self.provenance)
