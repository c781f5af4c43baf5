"""Williams-Otto CSTR: steady-state mass balances and the economic objective.

The reactor runs three second-order reactions in mass-fraction form

    A + B -> C        (rate k1 * XA * XB * holdup)
    B + C -> P + E    (rate k2 * XB * XC * holdup)
    C + P -> G        (rate k3 * XC * XP * holdup)

with Arrhenius rate constants k_i = A_i * exp(-B_i / T_kelvin).  The
constants below are the standard literature values for this plant
(holdup 2105 kg, feed of A fixed at 1.8275 kg/s, classic Arrhenius
pairs); they are configuration defaults validated by the plug-back
residual tests rather than assumptions baked into the solver.

Steady states solve the six mass balances by damped Newton iteration
from a fixed ladder of initial guesses (no warm starts, so results are
independent of query order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import accel
from .errors import InvalidArgumentError, SteadyStateError
from .problems import ProblemInstance, price_context_gen

SPECIES = ("A", "B", "C", "P", "E", "G")
X_A_MAX = 0.12
X_G_MAX = 0.08

RESIDUAL_TOL = 1e-10
MAX_ITERATIONS = 200
_NEG_FRACTION_TOL = -1e-9

# fixed initial-guess ladder for the Newton solve
_GUESSES = np.array([
    [0.15, 0.40, 0.02, 0.08, 0.25, 0.08],
    [0.30, 0.60, 0.01, 0.02, 0.05, 0.02],
    [1.0 / 6.0] * 6,
])


@dataclass(frozen=True)
class ReactorConstants:
    """Physical constants of the plant (SI-ish units: kg, s, degC)."""

    holdup: float = 2105.0
    feed_a: float = 1.8275
    arrhenius_pre: tuple[float, float, float] = (1.6599e6, 7.2117e8, 2.6745e12)
    arrhenius_act: tuple[float, float, float] = (6666.7, 8333.3, 11111.0)


DEFAULT_CONSTANTS = ReactorConstants()

# Chosen so the unconstrained profit optimum sits above the X_G threshold,
# keeping that constraint active (order: product P, byproduct E, raw A, raw B).
DEFAULT_PRICES = (1143.38, 25.92, 76.23, 114.34)

F_B_BOX = (4.0, 7.0)
T_R_BOX = (70.0, 100.0)


def _rates(t_r: float, c: ReactorConstants) -> tuple[float, float, float]:
    tk = t_r + 273.15
    a = c.arrhenius_pre
    b = c.arrhenius_act
    return (a[0] * math.exp(-b[0] / tk),
            a[1] * math.exp(-b[1] / tk),
            a[2] * math.exp(-b[2] / tk))


def residuals(x: np.ndarray, f_b: float, t_r: float,
              c: ReactorConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Mass-balance residuals (kg/s) at mass fractions ``x``."""
    k1, k2, k3 = _rates(t_r, c)
    return _residuals_core(np.asarray(x, dtype=np.float64), f_b, c.feed_a,
                           c.holdup, k1, k2, k3)


def _residuals_core(x, f_b, f_a, w, k1, k2, k3):
    f = f_a + f_b
    r1 = k1 * x[0] * x[1] * w
    r2 = k2 * x[1] * x[2] * w
    r3 = k3 * x[2] * x[3] * w
    return np.array([
        f_a - f * x[0] - r1,
        f_b - f * x[1] - r1 - r2,
        -f * x[2] + 2.0 * r1 - 2.0 * r2 - r3,
        -f * x[3] + r2 - 0.5 * r3,
        -f * x[4] + 2.0 * r2,
        -f * x[5] + 1.5 * r3,
    ])


def _newton_numpy(f_b, t_r, f_a, w, k1, k2, k3, tol, maxit):
    best = None
    for guess in _GUESSES:
        x = guess.copy()
        r = _residuals_core(x, f_b, f_a, w, k1, k2, k3)
        rnorm = float(np.max(np.abs(r)))
        for _ in range(maxit):
            if rnorm <= tol:
                return x, rnorm
            jac = _jacobian(x, f_b, f_a, w, k1, k2, k3)
            try:
                dx = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                break
            step = 1.0
            for _ in range(40):
                xn = x + step * dx
                rn = _residuals_core(xn, f_b, f_a, w, k1, k2, k3)
                rn_norm = float(np.max(np.abs(rn)))
                if rn_norm < rnorm:
                    break
                step *= 0.5
            else:
                break
            x, r, rnorm = xn, rn, rn_norm
        if rnorm <= tol:
            return x, rnorm
        if best is None or rnorm < best[1]:
            best = (x, rnorm)
    return best[0], best[1]


def _jacobian(x, f_b, f_a, w, k1, k2, k3):
    f = f_a + f_b
    d1a = k1 * x[1] * w
    d1b = k1 * x[0] * w
    d2b = k2 * x[2] * w
    d2c = k2 * x[1] * w
    d3c = k3 * x[3] * w
    d3p = k3 * x[2] * w
    return np.array([
        [-f - d1a, -d1b, 0.0, 0.0, 0.0, 0.0],
        [-d1a, -f - d1b - d2b, -d2c, 0.0, 0.0, 0.0],
        [2.0 * d1a, 2.0 * d1b - 2.0 * d2b, -f - 2.0 * d2c - d3c, -d3p, 0.0, 0.0],
        [0.0, d2b, d2c - 0.5 * d3c, -f - 0.5 * d3p, 0.0, 0.0],
        [0.0, 2.0 * d2b, 2.0 * d2c, 0.0, -f, 0.0],
        [0.0, 0.0, 1.5 * d3c, 1.5 * d3p, 0.0, -f],
    ])


@accel.njit
def _newton_numba(f_b, t_r, f_a, w, k1, k2, k3, guesses, tol, maxit):  # pragma: no cover
    f = f_a + f_b
    best_x = np.full(6, np.nan)
    best_norm = 1e300
    for gi in range(guesses.shape[0]):
        x = guesses[gi].copy()
        r = np.empty(6)
        jac = np.zeros((6, 6))
        _nb_residuals(x, f_b, f_a, w, k1, k2, k3, r)
        rnorm = np.max(np.abs(r))
        for _ in range(maxit):
            if rnorm <= tol:
                return x, rnorm
            d1a = k1 * x[1] * w
            d1b = k1 * x[0] * w
            d2b = k2 * x[2] * w
            d2c = k2 * x[1] * w
            d3c = k3 * x[3] * w
            d3p = k3 * x[2] * w
            jac[0, 0] = -f - d1a
            jac[0, 1] = -d1b
            jac[1, 0] = -d1a
            jac[1, 1] = -f - d1b - d2b
            jac[1, 2] = -d2c
            jac[2, 0] = 2.0 * d1a
            jac[2, 1] = 2.0 * d1b - 2.0 * d2b
            jac[2, 2] = -f - 2.0 * d2c - d3c
            jac[2, 3] = -d3p
            jac[3, 1] = d2b
            jac[3, 2] = d2c - 0.5 * d3c
            jac[3, 3] = -f - 0.5 * d3p
            jac[4, 1] = 2.0 * d2b
            jac[4, 2] = 2.0 * d2c
            jac[4, 4] = -f
            jac[5, 2] = 1.5 * d3c
            jac[5, 3] = 1.5 * d3p
            jac[5, 5] = -f
            dx = np.linalg.solve(jac, -r)
            step = 1.0
            improved = False
            xn = x
            rn = r
            rn_norm = rnorm
            for _ in range(40):
                xn = x + step * dx
                rn = np.empty(6)
                _nb_residuals(xn, f_b, f_a, w, k1, k2, k3, rn)
                rn_norm = np.max(np.abs(rn))
                if rn_norm < rnorm:
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
            x, r, rnorm = xn, rn, rn_norm
        if rnorm <= tol:
            return x, rnorm
        if rnorm < best_norm:
            best_norm = rnorm
            best_x = x.copy()
    return best_x, best_norm


@accel.njit
def _nb_residuals(x, f_b, f_a, w, k1, k2, k3, out):  # pragma: no cover - jitted
    f = f_a + f_b
    r1 = k1 * x[0] * x[1] * w
    r2 = k2 * x[1] * x[2] * w
    r3 = k3 * x[2] * x[3] * w
    out[0] = f_a - f * x[0] - r1
    out[1] = f_b - f * x[1] - r1 - r2
    out[2] = -f * x[2] + 2.0 * r1 - 2.0 * r2 - r3
    out[3] = -f * x[3] + r2 - 0.5 * r3
    out[4] = -f * x[4] + 2.0 * r2
    out[5] = -f * x[5] + 1.5 * r3


def cstr_steady_state(f_b: float, t_r: float,
                      constants: ReactorConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Steady-state mass fractions (X_A, X_B, X_C, X_P, X_E, X_G)."""
    k1, k2, k3 = _rates(t_r, constants)
    if accel.use_numba():
        x, rnorm = _newton_numba(float(f_b), float(t_r), constants.feed_a,
                                 constants.holdup, k1, k2, k3, _GUESSES,
                                 RESIDUAL_TOL, MAX_ITERATIONS)
    else:
        x, rnorm = _newton_numpy(float(f_b), float(t_r), constants.feed_a,
                                 constants.holdup, k1, k2, k3,
                                 RESIDUAL_TOL, MAX_ITERATIONS)
    if not rnorm <= RESIDUAL_TOL:
        raise SteadyStateError(
            f"mass balances did not converge at F_B={f_b}, T_r={t_r}",
            residual=float(rnorm))
    if float(np.min(x)) < _NEG_FRACTION_TOL:
        raise SteadyStateError(
            f"negative mass fraction at F_B={f_b}, T_r={t_r}: {x}")
    return np.maximum(x, 0.0)


def wo_objective(f_b: float, t_r: float, prices,
                 constants: ReactorConstants = DEFAULT_CONSTANTS) -> float:
    """Negated economic profit: product and byproduct revenue minus raw
    material cost, at the steady state for (f_b, t_r)."""
    x = cstr_steady_state(f_b, t_r, constants)
    return _profit_to_cost(x, f_b, np.asarray(prices, dtype=np.float64), constants)


def _profit_to_cost(x, f_b, prices, constants):
    flow = constants.feed_a + f_b
    revenue = prices[0] * flow * x[3] + prices[1] * flow * x[4]
    cost = prices[2] * constants.feed_a + prices[3] * f_b
    return float(-(revenue - cost))


@dataclass
class WilliamsOttoInstance(ProblemInstance):
    """Economic reactor tuning with price contexts.

    theta = (F_B, T_r); z = the four prices; constraints are the
    threshold excesses of the residual A and G mass fractions.  Steady
    states are cached per theta (exact-key), so lattice-heavy consumers
    such as the per-context optimum oracle stay cheap.
    """

    nominal_prices: tuple[float, ...] = DEFAULT_PRICES
    price_alpha: float = 0.2
    constants: ReactorConstants = DEFAULT_CONSTANTS
    _ss_cache: dict = field(default_factory=dict, repr=False)

    def steady_state(self, theta) -> np.ndarray:
        key = (float(theta[0]), float(theta[1]))
        hit = self._ss_cache.get(key)
        if hit is None:
            hit = cstr_steady_state(key[0], key[1], self.constants)
            self._ss_cache[key] = hit
        return hit


def make_williams_otto(nominal_prices=DEFAULT_PRICES, price_alpha: float = 0.2,
                       noise_sigma: float = 0.05,
                       constants: ReactorConstants = DEFAULT_CONSTANTS,
                       name: str = "williams-otto") -> WilliamsOttoInstance:
    nominal = np.asarray(nominal_prices, dtype=np.float64)
    if nominal.shape != (4,):
        raise InvalidArgumentError("nominal_prices must have four components")
    z_box = np.stack([(1.0 - price_alpha) * nominal,
                      (1.0 + price_alpha) * nominal], axis=1)

    instance = WilliamsOttoInstance(
        name=name,
        n_theta=2,
        n_z=4,
        n_constraints=2,
        theta_box=np.array([F_B_BOX, T_R_BOX]),
        z_box=z_box,
        objective=None,
        constraints=[None, None],
        noise_sigma=noise_sigma,
        context_gen=lambda s: price_context_gen(nominal, price_alpha, s),
        lipschitz_in_z=True,
        nominal_prices=tuple(float(p) for p in nominal),
        price_alpha=price_alpha,
        constants=constants,
    )

    def objective(theta, z):
        x = instance.steady_state(theta)
        return _profit_to_cost(x, float(theta[0]), np.asarray(z, dtype=np.float64),
                               constants)

    def g_a(theta, z):
        return float(instance.steady_state(theta)[0] - X_A_MAX)

    def g_g(theta, z):
        return float(instance.steady_state(theta)[5] - X_G_MAX)

    def objective_batch(thetas, z):
        z = np.asarray(z, dtype=np.float64)
        return np.array([objective(th, z) for th in np.atleast_2d(thetas)])

    def constraints_batch(thetas, z):
        thetas = np.atleast_2d(thetas)
        out = np.empty((thetas.shape[0], 2))
        for j, th in enumerate(thetas):
            x = instance.steady_state(th)
            out[j, 0] = x[0] - X_A_MAX
            out[j, 1] = x[5] - X_G_MAX
        return out

    instance.objective = objective
    instance.constraints = [g_a, g_g]
    instance.objective_batch = objective_batch
    instance.constraints_batch = constraints_batch
    return instance
