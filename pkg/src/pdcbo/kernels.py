"""Covariance kernels over concatenated (parameter, context) inputs.

Three stationary-or-simpler families are supported: squared exponential
(the workhorse; note the exponent is ``-sum(((a-b)/l)^2)`` without a 1/2
factor), Matern-5/2, and linear.  A spec is immutable and hashable so
posterior machinery can group surrogates that share a kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import accel
from .errors import DimensionMismatchError, InvalidArgumentError

SQUARED_EXPONENTIAL = "squared-exponential"
MATERN52 = "matern-5/2"
LINEAR = "linear"
KINDS = (SQUARED_EXPONENTIAL, MATERN52, LINEAR)

# integer codes shared with the jitted kernels
_KIND_CODE = {SQUARED_EXPONENTIAL: 0, MATERN52: 1, LINEAR: 2}

_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters, one lengthscale per input dim."""

    kind: str
    signal_variance: float
    lengthscales: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown kernel kind {self.kind!r}")
        if not self.signal_variance > 0:
            raise InvalidArgumentError("signal_variance must be positive")
        ls = tuple(float(v) for v in self.lengthscales)
        if not ls or any(v <= 0 for v in ls):
            raise InvalidArgumentError("lengthscales must be a nonempty positive vector")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def normalized(self) -> "KernelSpec":
        """Unit-variance view of this kernel (k(x,x) <= 1 for SE/Matern).

        Theory-mode schedules are stated for normalized kernels, so they
        compute information gain through this view while predictions keep
        the configured signal variance.
        """
        return KernelSpec(self.kind, 1.0, self.lengthscales)

    def _code(self) -> int:
        return _KIND_CODE[self.kind]


def _as_matrix(spec: KernelSpec, x) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if arr.shape[-1] != spec.dim:
        raise DimensionMismatchError(
            f"input dim {arr.shape[-1]} != kernel dim {spec.dim}"
        )
    return arr


def kernel_eval(spec: KernelSpec, x1, x2) -> float:
    """Evaluate k(x1, x2) for single input vectors."""
    a = _as_matrix(spec, x1)
    b = _as_matrix(spec, x2)
    return float(cross_matrix(spec, a, b)[0, 0])


def cross_matrix(spec: KernelSpec, X1, X2) -> np.ndarray:
    """Kernel matrix k(X1, X2) of shape (len(X1), len(X2))."""
    A = _as_matrix(spec, X1)
    B = _as_matrix(spec, X2)
    inv_ls = 1.0 / np.asarray(spec.lengthscales)
    if accel.use_numba():
        return _cross_numba(spec._code(), A, B, inv_ls, spec.signal_variance)
    return _cross_numpy(spec._code(), A, B, inv_ls, spec.signal_variance)


def gram_matrix(spec: KernelSpec, X) -> np.ndarray:
    """Symmetric Gram matrix k(X, X)."""
    K = cross_matrix(spec, X, X)
    # enforce exact symmetry against roundoff before factorization
    return 0.5 * (K + K.T)


def self_variance(spec: KernelSpec, X) -> np.ndarray:
    """k(x, x) for each row of X (constant for SE/Matern, not for linear)."""
    A = _as_matrix(spec, X)
    if spec.kind == LINEAR:
        scaled = A / np.asarray(spec.lengthscales)
        return spec.signal_variance * np.sum(scaled * scaled, axis=1)
    return np.full(A.shape[0], spec.signal_variance)


def _cross_numpy(code: int, A: np.ndarray, B: np.ndarray, inv_ls: np.ndarray,
                 sv: float) -> np.ndarray:
    As = A * inv_ls
    Bs = B * inv_ls
    if code == 2:
        return sv * (As @ Bs.T)
    d2 = (
        np.sum(As * As, axis=1)[:, None]
        - 2.0 * (As @ Bs.T)
        + np.sum(Bs * Bs, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    if code == 0:
        return sv * np.exp(-d2)
    r = np.sqrt(d2)
    return sv * (1.0 + _SQRT5 * r + (5.0 / 3.0) * d2) * np.exp(-_SQRT5 * r)


@accel.njit
def _cross_numba(code, A, B, inv_ls, sv):  # pragma: no cover - jitted
    m, d = A.shape
    n = B.shape[0]
    out = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            if code == 2:
                acc = 0.0
                for k in range(d):
                    acc += A[i, k] * inv_ls[k] * B[j, k] * inv_ls[k]
                out[i, j] = sv * acc
            else:
                d2 = 0.0
                for k in range(d):
                    diff = (A[i, k] - B[j, k]) * inv_ls[k]
                    d2 += diff * diff
                if code == 0:
                    out[i, j] = sv * np.exp(-d2)
                else:
                    r = np.sqrt(d2)
                    out[i, j] = sv * (1.0 + 2.2360679774997896 * r
                                      + (5.0 / 3.0) * d2) * np.exp(-2.2360679774997896 * r)
    return out
