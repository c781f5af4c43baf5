"""Gaussian-process surrogates: conditioning, confidence bounds, information gain.

The posterior math is the standard noisy-GP regression recursion: with
inputs ``X`` and observations ``y``,

    mu(x)    = k(X, x)^T (K + lam I)^{-1} y
    sigma^2(x) = k(x, x) - k(X, x)^T (K + lam I)^{-1} k(X, x)

backed by a cached Cholesky factor.  All functions observed at the same
inputs and sharing a kernel also share one factorization; per-function
state is just the forward-solved observation vector.

New points are folded in by appending one row to the factor (O(t^2));
a full refactorization runs every ``REFRESH_EVERY`` appends to bound
floating-point drift.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import accel
from .errors import (
    DimensionMismatchError,
    FactorizationError,
    InvalidArgumentError,
    NegativeVarianceError,
)
from .kernels import KernelSpec, cross_matrix, gram_matrix, self_variance

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)
REFRESH_EVERY = 50
NEG_VARIANCE_TOL = -1e-9
_INIT_CAPACITY = 64


class Dataset:
    """Shared evaluation history: inputs x_t = (theta_t, z_t) plus one
    observation list per function (objective first, then constraints).

    ``noise_variance`` is the GP model's observation-noise variance (the
    regularizer added to the Gram diagonal).  Optional ``box`` enables
    membership validation of appended inputs.
    """

    def __init__(self, dim: int, n_functions: int, noise_variance: float,
                 box: np.ndarray | None = None):
        if noise_variance <= 0:
            raise InvalidArgumentError("noise_variance must be positive")
        if dim < 1 or n_functions < 1:
            raise InvalidArgumentError("dim and n_functions must be >= 1")
        self.dim = dim
        self.n_functions = n_functions
        self.noise_variance = float(noise_variance)
        self.box = None if box is None else np.asarray(box, dtype=np.float64)
        if self.box is not None and self.box.shape != (dim, 2):
            raise InvalidArgumentError("box must have shape (dim, 2)")
        self._t = 0
        self._X = np.empty((_INIT_CAPACITY, dim))
        self._Y = np.empty((_INIT_CAPACITY, n_functions))
        self._factors: dict[KernelSpec, _FactorState] = {}

    def __len__(self) -> int:
        return self._t

    @property
    def inputs(self) -> np.ndarray:
        return self._X[: self._t]

    @property
    def observations(self) -> np.ndarray:
        """Array of shape (t, n_functions); column i is y_{i,1:t}."""
        return self._Y[: self._t]

    def append(self, x, y) -> None:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.dim:
            raise DimensionMismatchError(f"input dim {x.shape[0]} != {self.dim}")
        if y.shape[0] != self.n_functions:
            raise DimensionMismatchError(
                f"obs count {y.shape[0]} != {self.n_functions}")
        if self.box is not None:
            if np.any(x < self.box[:, 0] - 1e-12) or np.any(x > self.box[:, 1] + 1e-12):
                raise InvalidArgumentError(f"input {x} outside declared box")
        if self._t == self._X.shape[0]:
            self._X = np.concatenate([self._X, np.empty_like(self._X)])
            self._Y = np.concatenate([self._Y, np.empty_like(self._Y)])
        self._X[self._t] = x
        self._Y[self._t] = y
        self._t += 1
        for factor in self._factors.values():
            factor.notify_append()

    def factor_for(self, kernel: KernelSpec) -> "_FactorState":
        if kernel.dim != self.dim:
            raise DimensionMismatchError(
                f"kernel dim {kernel.dim} != dataset dim {self.dim}")
        state = self._factors.get(kernel)
        if state is None:
            state = _FactorState(self, kernel)
            self._factors[kernel] = state
        return state


class _FactorState:
    """Cached Cholesky of (K + lam I) for one kernel over a Dataset,
    plus the forward solves W = L^{-1} Y for every function."""

    def __init__(self, dataset: Dataset, kernel: KernelSpec):
        self.dataset = dataset
        self.kernel = kernel
        self.lam = dataset.noise_variance
        self.t = 0
        self.jitter = 0.0
        self._appends_since_refresh = 0
        cap = max(_INIT_CAPACITY, len(dataset))
        self._L = np.zeros((cap, cap))
        self._W = np.zeros((cap, dataset.n_functions))
        if len(dataset):
            self._refactor(len(dataset))

    # -- factor maintenance ------------------------------------------------

    @property
    def L(self) -> np.ndarray:
        return self._L[: self.t, : self.t]

    @property
    def W(self) -> np.ndarray:
        return self._W[: self.t]

    def notify_append(self) -> None:
        target = len(self.dataset)
        while self.t < target:
            self._append_one()

    def _grow(self, needed: int) -> None:
        cap = self._L.shape[0]
        if needed <= cap:
            return
        new_cap = cap
        while new_cap < needed:
            new_cap *= 2
        L = np.zeros((new_cap, new_cap))
        L[: self.t, : self.t] = self.L
        W = np.zeros((new_cap, self.dataset.n_functions))
        W[: self.t] = self.W
        self._L, self._W = L, W

    def _append_one(self) -> None:
        i = self.t
        self._grow(i + 1)
        self._appends_since_refresh += 1
        if self._appends_since_refresh >= REFRESH_EVERY:
            self._refactor(i + 1)
            return
        x = self.dataset.inputs[i]
        y = self.dataset.observations[i]
        know = float(self_variance(self.kernel, x[None, :])[0]) + self.lam + self.jitter
        if i == 0:
            ldiag = math.sqrt(know)
            lrow = np.empty(0)
        else:
            kvec = cross_matrix(self.kernel, self.dataset.inputs[:i], x[None, :])[:, 0]
            lrow = _forward_solve(self.L, kvec)
            dsq = know - float(lrow @ lrow)
            if dsq <= 1e-12:
                self._refactor(i + 1)
                return
            ldiag = math.sqrt(dsq)
        self._L[i, :i] = lrow
        self._L[i, i] = ldiag
        self._W[i] = (y - lrow @ self._W[:i]) / ldiag
        self.t = i + 1

    def _refactor(self, t: int) -> None:
        self._grow(t)
        X = self.dataset.inputs[:t]
        K = gram_matrix(self.kernel, X)
        K[np.diag_indices_from(K)] += self.lam
        tried = []
        for jit in JITTER_LADDER:
            tried.append(jit)
            try:
                L = np.linalg.cholesky(K + jit * np.eye(t))
            except np.linalg.LinAlgError:
                continue
            self._L[:t, :t] = L
            self._W[:t] = solve_triangular(L, self.dataset.observations[:t],
                                           lower=True, check_finite=False)
            self.t = t
            self.jitter = jit
            self._appends_since_refresh = 0
            return
        raise FactorizationError(
            f"Gram matrix of {t} points is not PSD", tuple(tried))

    # -- prediction ----------------------------------------------------------

    def predict(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means (m, n_functions) and shared variances (m,)."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
        if Xq.shape[1] != self.dataset.dim:
            raise DimensionMismatchError(
                f"query dim {Xq.shape[1]} != {self.dataset.dim}")
        prior = self_variance(self.kernel, Xq)
        if self.t == 0:
            return np.zeros((Xq.shape[0], self.dataset.n_functions)), prior
        if accel.use_numba():
            inv_ls = 1.0 / np.asarray(self.kernel.lengthscales)
            mu, var = _predict_numba(
                self.kernel._code(), inv_ls, self.kernel.signal_variance,
                self._L, self.t, self.dataset.inputs[: self.t],
                self._W[: self.t], Xq, prior)
        else:
            Kq = cross_matrix(self.kernel, self.dataset.inputs[: self.t], Xq)
            V = solve_triangular(self.L, Kq, lower=True, check_finite=False)
            mu = V.T @ self.W
            var = prior - np.einsum("ij,ij->j", V, V)
        return mu, _clamp_variance(var)


def _clamp_variance(var: np.ndarray) -> np.ndarray:
    worst = float(np.min(var)) if var.size else 0.0
    if worst < NEG_VARIANCE_TOL:
        raise NegativeVarianceError(
            f"predictive variance {worst:.3e} below roundoff tolerance")
    return np.maximum(var, 0.0)


def _forward_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    if accel.use_numba():
        return _forward_solve_numba(L, np.ascontiguousarray(b))
    return solve_triangular(L, b, lower=True, check_finite=False)


class GpPosterior:
    """One function's surrogate view over a shared Dataset."""

    def __init__(self, kernel: KernelSpec, dataset: Dataset, fn_index: int):
        if not 0 <= fn_index < dataset.n_functions:
            raise InvalidArgumentError(f"fn_index {fn_index} out of range")
        self.kernel = kernel
        self.dataset = dataset
        self.fn_index = fn_index
        self._factor = dataset.factor_for(kernel)

    @property
    def chol(self) -> np.ndarray:
        """Lower-triangular factor of (K_t + noise_variance I)."""
        self._factor.notify_append()
        return self._factor.L

    @property
    def alpha(self) -> np.ndarray:
        """(K_t + noise_variance I)^{-1} y for this function."""
        self._factor.notify_append()
        if self._factor.t == 0:
            return np.empty(0)
        return solve_triangular(self._factor.L.T,
                                self._factor.W[:, self.fn_index],
                                lower=False, check_finite=False)

    def predict(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized (mu, sigma) over query rows."""
        self._factor.notify_append()
        mu, var = self._factor.predict(Xq)
        return mu[:, self.fn_index], np.sqrt(var)


def make_posteriors(dataset: Dataset, kernels) -> list[GpPosterior]:
    """One posterior per function; posteriors with equal kernels share
    their factorization."""
    kernels = list(kernels)
    if len(kernels) != dataset.n_functions:
        raise InvalidArgumentError(
            f"need {dataset.n_functions} kernels, got {len(kernels)}")
    return [GpPosterior(k, dataset, i) for i, k in enumerate(kernels)]


def posterior_predict(post: GpPosterior, x) -> tuple[float, float]:
    """Posterior mean and standard deviation at a single input."""
    mu, sigma = post.predict(np.asarray(x, dtype=np.float64)[None, :])
    return float(mu[0]), float(sigma[0])


def confidence_bounds(post: GpPosterior, x, beta_sqrt: float,
                      clip: float) -> tuple[float, float]:
    """Clipped high-probability interval around the posterior mean:
    lower = max(mu - beta_sqrt * sigma, -clip), upper symmetric."""
    if beta_sqrt <= 0 or clip <= 0:
        raise InvalidArgumentError("beta_sqrt and clip must be positive")
    mu, sigma = posterior_predict(post, x)
    lower = max(mu - beta_sqrt * sigma, -clip)
    upper = min(mu + beta_sqrt * sigma, clip)
    if lower > upper:
        # Only reachable when the clip level undercuts |mu|, i.e. the
        # configured norm bound is inconsistent with the data.
        log.warning("confidence interval crossed at clip %.3g (mu=%.3g); "
                    "returning the degenerate clip interval", clip, mu)
        return -clip, clip
    return lower, upper


def batch_bounds(mu: np.ndarray, sigma: np.ndarray, beta_sqrt: float,
                 clip: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized version of :func:`confidence_bounds` on precomputed
    posterior arrays."""
    lower = np.maximum(mu - beta_sqrt * sigma, -clip)
    upper = np.minimum(mu + beta_sqrt * sigma, clip)
    crossed = lower > upper
    if np.any(crossed):
        log.warning("confidence interval crossed at %d points (clip %.3g)",
                    int(np.sum(crossed)), clip)
        lower = np.where(crossed, -clip, lower)
        upper = np.where(crossed, clip, upper)
    return lower, upper


@dataclass(frozen=True)
class BetaSchedule:
    """Width multiplier beta^{1/2} for the confidence bounds.

    ``constant`` mode returns ``constant_value`` for every step; ``theory``
    mode returns C_i + sigma * sqrt(2 * (gamma + 1 + ln((N+1)/delta)))
    using a supplied information-gain estimate for gamma.
    """

    mode: str
    constant_value: float = 1.0
    rkhs_bounds: tuple[float, ...] = ()
    noise_sub_gaussian: float = 0.0
    delta: float = 0.05
    n_constraints: int = 0

    def __post_init__(self):
        if self.mode not in ("constant", "theory"):
            raise InvalidArgumentError(f"unknown beta mode {self.mode!r}")
        if self.mode == "constant" and self.constant_value <= 0:
            raise InvalidArgumentError("constant_value must be positive")
        object.__setattr__(self, "rkhs_bounds",
                           tuple(float(c) for c in self.rkhs_bounds))


def beta_value(s: BetaSchedule, fn_index: int, t: int,
               gamma_estimate: float) -> float:
    """beta^{1/2} for function ``fn_index`` at step ``t``."""
    if t < 1:
        raise InvalidArgumentError("t must be >= 1")
    if gamma_estimate < 0:
        raise InvalidArgumentError("gamma_estimate must be nonnegative")
    if s.mode == "constant":
        return s.constant_value
    if not 0.0 < s.delta < 1.0:
        raise InvalidArgumentError("delta must lie in (0, 1)")
    c = s.rkhs_bounds[fn_index]
    inner = 2.0 * (gamma_estimate + 1.0 + math.log((s.n_constraints + 1) / s.delta))
    return c + s.noise_sub_gaussian * math.sqrt(inner)


def info_gain_curve(spec: KernelSpec, noise_variance: float, candidate_grid,
                    t: int) -> np.ndarray:
    """Greedy information-gain prefix sums gamma(0..t) over a finite grid.

    Each round adds the grid point with the largest marginal gain
    0.5 * log(1 + sigma_cur^2(x) / noise_variance); by submodularity the
    result lower-bounds the true maximum within a factor (1 - 1/e).
    """
    grid = np.atleast_2d(np.asarray(candidate_grid, dtype=np.float64))
    if grid.shape[0] == 0:
        raise InvalidArgumentError("candidate grid must be nonempty")
    if t < 0:
        raise InvalidArgumentError("budget t must be >= 0")
    V = gram_matrix(spec, grid)
    curve = np.zeros(t + 1)
    total = 0.0
    for step in range(t):
        d = np.maximum(np.diag(V), 0.0)
        marginals = 0.5 * np.log1p(d / noise_variance)
        j = int(np.argmax(marginals))
        total += float(marginals[j])
        curve[step + 1] = total
        col = V[:, j].copy()
        V -= np.outer(col, col) / (V[j, j] + noise_variance)
    return curve


def info_gain_greedy(spec: KernelSpec, noise_variance: float, candidate_grid,
                     t: int) -> float:
    """Accumulated greedy information gain for a budget of ``t`` picks."""
    return float(info_gain_curve(spec, noise_variance, candidate_grid, t)[t])


@accel.njit
def _forward_solve_numba(L, b):  # pragma: no cover - jitted
    n = b.shape[0]
    v = np.empty(n)
    for i in range(n):
        s = b[i]
        for j in range(i):
            s -= L[i, j] * v[j]
        v[i] = s / L[i, i]
    return v


@accel.njit
def _predict_numba(code, inv_ls, sv, L, t, X, W, Xq, prior):  # pragma: no cover
    m = Xq.shape[0]
    d = X.shape[1]
    F = W.shape[1]
    mu = np.zeros((m, F))
    var = np.empty(m)
    v = np.empty(t)
    for q in range(m):
        for i in range(t):
            if code == 2:
                acc = 0.0
                for k in range(d):
                    acc += X[i, k] * inv_ls[k] * Xq[q, k] * inv_ls[k]
                kval = sv * acc
            else:
                d2 = 0.0
                for k in range(d):
                    diff = (X[i, k] - Xq[q, k]) * inv_ls[k]
                    d2 += diff * diff
                if code == 0:
                    kval = sv * np.exp(-d2)
                else:
                    r = np.sqrt(d2)
                    kval = sv * (1.0 + 2.2360679774997896 * r
                                 + (5.0 / 3.0) * d2) * np.exp(-2.2360679774997896 * r)
            s = kval
            for j in range(i):
                s -= L[i, j] * v[j]
            v[i] = s / L[i, i]
        sq = 0.0
        for i in range(t):
            sq += v[i] * v[i]
        var[q] = prior[q] - sq
        for f in range(F):
            s = 0.0
            for i in range(t):
                s += v[i] * W[i, f]
            mu[q, f] = s
    return mu, var
