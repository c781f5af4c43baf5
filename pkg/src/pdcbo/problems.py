"""Benchmark problem families and context generators.

A ProblemInstance bundles deterministic ground-truth oracles for the
objective and constraints over a box domain, the observation-noise
scale, and a seeded context stream.  The harness adds noise at query
time; the oracles themselves are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np

from .errors import InvalidArgumentError
from .gp import JITTER_LADDER
from .kernels import KernelSpec, cross_matrix, gram_matrix

# SeedSequence spawn keys: one stream per role so adding streams never
# perturbs existing draws.
STREAM_CONTEXT = 0
STREAM_NOISE = 1
STREAM_PROBLEM = 2


def _check_box(box, what: str) -> np.ndarray:
    box = np.asarray(box, dtype=np.float64)
    if box.ndim != 2 or box.shape[1] != 2:
        raise InvalidArgumentError(f"{what} must have shape (dims, 2)")
    if not np.all(np.isfinite(box)) or np.any(box[:, 0] > box[:, 1]):
        raise InvalidArgumentError(f"{what} intervals must be finite and ordered")
    return box


@dataclass
class ProblemInstance:
    """Black-box benchmark problem over Theta x Z."""

    name: str
    n_theta: int
    n_z: int
    n_constraints: int
    theta_box: np.ndarray
    z_box: np.ndarray
    objective: Callable[[np.ndarray, np.ndarray], float]
    constraints: list
    noise_sigma: float
    context_gen: Callable[[int], Iterator[np.ndarray]]
    lipschitz_in_z: bool = False
    objective_batch: Callable | None = None
    constraints_batch: Callable | None = None
    safe_seed_hint: np.ndarray | None = None

    def __post_init__(self):
        self.theta_box = _check_box(self.theta_box, "theta_box")
        self.z_box = _check_box(self.z_box, "z_box")
        if len(self.constraints) != self.n_constraints:
            raise InvalidArgumentError("constraint count mismatch")
        if self.noise_sigma < 0:
            raise InvalidArgumentError("noise_sigma must be nonnegative")

    @property
    def input_box(self) -> np.ndarray:
        return np.vstack([self.theta_box, self.z_box])

    def eval_objective_batch(self, thetas: np.ndarray, z: np.ndarray) -> np.ndarray:
        if self.objective_batch is not None:
            return self.objective_batch(thetas, z)
        return np.array([self.objective(th, z) for th in thetas])

    def eval_constraints_batch(self, thetas: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Array (len(thetas), n_constraints) of true constraint values."""
        if self.constraints_batch is not None:
            return self.constraints_batch(thetas, z)
        out = np.empty((len(thetas), self.n_constraints))
        for j, th in enumerate(thetas):
            for i, g in enumerate(self.constraints):
                out[j, i] = g(th, z)
        return out


def lattice(box: np.ndarray, resolution) -> np.ndarray:
    """Full-factorial lattice over a box; first dimension varies slowest,
    so row order (the argmin tie-break order) is reproducible."""
    box = _check_box(box, "box")
    dims = box.shape[0]
    if np.isscalar(resolution):
        resolution = [int(resolution)] * dims
    if len(resolution) != dims:
        raise InvalidArgumentError("resolution must be scalar or one per dim")
    axes = [np.linspace(lo, hi, max(int(r), 1)) for (lo, hi), r in zip(box, resolution)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def theta_lattice(problem: ProblemInstance, resolution) -> np.ndarray:
    return lattice(problem.theta_box, resolution)


def uniform_context_gen(z_box, seed: int) -> Iterator[np.ndarray]:
    """I.i.d. uniform draws over the context box, one per step."""
    box = _check_box(z_box, "z_box")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(
        seed, spawn_key=(STREAM_CONTEXT,))))
    lo, hi = box[:, 0], box[:, 1]
    while True:
        yield lo + rng.random(box.shape[0]) * (hi - lo)


def price_context_gen(nominal, alpha: float, seed: int) -> Iterator[np.ndarray]:
    """Per-step independent uniform prices in [(1-alpha)*nominal, (1+alpha)*nominal]."""
    nominal = np.asarray(nominal, dtype=np.float64)
    if np.any(nominal <= 0):
        raise InvalidArgumentError("nominal prices must be positive")
    if alpha < 0:
        raise InvalidArgumentError("alpha must be nonnegative")
    box = np.stack([(1.0 - alpha) * nominal, (1.0 + alpha) * nominal], axis=1)
    return uniform_context_gen(box, seed)


@dataclass
class GpSampledInstance(ProblemInstance):
    """Instance whose objective and constraints are one joint draw from a
    GP prior, anchored on a lattice and interpolated off-lattice by the
    near-noiseless posterior mean (so the functions are fixed and pure)."""

    kernel: KernelSpec = None
    anchor_grid: np.ndarray = None
    anchor_values: np.ndarray = None  # (n_anchors, n_functions)
    seed: int = 0
    interp_alpha: np.ndarray = field(default=None, repr=False)


_INTERP_NOISE = 1e-10


def _chol_with_ladder(K: np.ndarray) -> np.ndarray:
    for jit in JITTER_LADDER[1:]:
        try:
            return np.linalg.cholesky(K + jit * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise InvalidArgumentError("anchor Gram matrix is not PSD at any jitter level")


def sample_gp_instance(kernel: KernelSpec, seed: int, grid_resolution,
                       theta_box=((-10.0, 10.0),), z_box=((-10.0, 10.0),),
                       n_constraints: int = 1, noise_sigma: float = 0.05,
                       constraint_offset: float = 0.0,
                       name: str | None = None) -> GpSampledInstance:
    """Draw objective and constraint functions jointly from the GP prior.

    Each function is an independent draw; the anchor values are exact
    samples and off-lattice queries go through posterior-mean
    interpolation with noise variance 1e-10.  ``constraint_offset`` is
    added to every constraint draw (negative values enlarge the feasible
    region, which the schedule-validation configs rely on).
    """
    theta_box = _check_box(theta_box, "theta_box")
    z_box = _check_box(z_box, "z_box")
    if kernel.dim != theta_box.shape[0] + z_box.shape[0]:
        raise InvalidArgumentError("kernel dim must equal n_theta + n_z")
    return _sample_cached(kernel, int(seed), _res_key(grid_resolution, kernel.dim),
                          _box_key(theta_box), _box_key(z_box), int(n_constraints),
                          float(noise_sigma), float(constraint_offset), name)


def _res_key(resolution, dims) -> tuple[int, ...]:
    if np.isscalar(resolution):
        return (int(resolution),) * dims
    return tuple(int(r) for r in resolution)


def _box_key(box: np.ndarray) -> tuple[tuple[float, float], ...]:
    return tuple((float(lo), float(hi)) for lo, hi in box)


@lru_cache(maxsize=64)
def _sample_cached(kernel, seed, resolution, theta_box_key, z_box_key,
                   n_constraints, noise_sigma, constraint_offset, name):
    theta_box = np.asarray(theta_box_key)
    z_box = np.asarray(z_box_key)
    if min(resolution) < 2:
        raise InvalidArgumentError("grid_resolution must be >= 2 per dimension")
    box = np.vstack([theta_box, z_box])
    anchors = lattice(box, resolution)
    K = gram_matrix(kernel, anchors)
    L = _chol_with_ladder(K)
    n_fn = n_constraints + 1
    values = np.empty((anchors.shape[0], n_fn))
    for i in range(n_fn):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(
            seed, spawn_key=(STREAM_PROBLEM, i))))
        values[:, i] = L @ rng.standard_normal(anchors.shape[0])
    values[:, 1:] += constraint_offset

    Kn = K + _INTERP_NOISE * np.eye(K.shape[0])
    Ln = np.linalg.cholesky(Kn)
    alpha = np.linalg.solve(Ln.T, np.linalg.solve(Ln, values))

    n_theta = theta_box.shape[0]

    def _interp(thetas: np.ndarray, z: np.ndarray, col: int) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        X = np.hstack([thetas, np.tile(np.asarray(z, dtype=np.float64),
                                       (thetas.shape[0], 1))])
        return cross_matrix(kernel, X, anchors) @ alpha[:, col]

    def objective(theta, z):
        return float(_interp(np.asarray(theta), z, 0)[0])

    def make_constraint(i):
        def g(theta, z):
            return float(_interp(np.asarray(theta), z, i + 1)[0])
        return g

    def objective_batch(thetas, z):
        return _interp(thetas, z, 0)

    def constraints_batch(thetas, z):
        thetas = np.atleast_2d(thetas)
        X = np.hstack([thetas, np.tile(np.asarray(z, dtype=np.float64),
                                       (thetas.shape[0], 1))])
        return cross_matrix(kernel, X, anchors) @ alpha[:, 1:]

    return GpSampledInstance(
        name=name or f"gp-sample-{seed}",
        n_theta=n_theta,
        n_z=z_box.shape[0],
        n_constraints=n_constraints,
        theta_box=theta_box,
        z_box=z_box,
        objective=objective,
        constraints=[make_constraint(i) for i in range(n_constraints)],
        noise_sigma=noise_sigma,
        context_gen=lambda s: uniform_context_gen(z_box, s),
        lipschitz_in_z=True,
        objective_batch=objective_batch,
        constraints_batch=constraints_batch,
        kernel=kernel,
        anchor_grid=anchors,
        anchor_values=values,
        seed=seed,
        interp_alpha=alpha,
    )


def make_smoke_problem(noise_sigma: float = 0.0) -> ProblemInstance:
    """Tiny closed-form problem (quadratic objective, never-active
    constraint, constant context) used by fast tests."""

    def objective(theta, z):
        return float(theta[0] ** 2)

    def g(theta, z):
        return float(theta[0] - 10.0)

    def constant_context(seed):
        while True:
            yield np.zeros(1)

    return ProblemInstance(
        name="smoke",
        n_theta=1,
        n_z=1,
        n_constraints=1,
        theta_box=np.array([[-1.0, 1.0]]),
        z_box=np.array([[0.0, 0.0]]),
        objective=objective,
        constraints=[g],
        noise_sigma=noise_sigma,
        context_gen=constant_context,
        lipschitz_in_z=True,
        objective_batch=lambda thetas, z: np.asarray(thetas)[:, 0] ** 2,
        constraints_batch=lambda thetas, z: (np.asarray(thetas)[:, 0] - 10.0)[:, None],
    )
