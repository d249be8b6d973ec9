"""Geometry, sampling and integration on the simplex.

The simplex is ``S_d = {s in [0, 1]^d : s_1 + ... + s_d <= 1}``; it has
volume ``1/d!``. Collections of points are ``(n, d)`` float arrays.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .errors import DomainError, NumericalError

__all__ = [
    "DEFAULT_TOL",
    "IntegralEstimate",
    "SimplexPoint",
    "as_point",
    "as_points",
    "contains",
    "in_interior_region",
    "integrate_grid",
    "integrate_mc",
    "sample_dirichlet",
    "sample_uniform",
    "volume",
]

DEFAULT_TOL = 1e-12


def volume(d):
    """Lebesgue volume ``1/d!`` of ``S_d``."""
    return 1.0 / math.factorial(d)


@dataclass(frozen=True)
class SimplexPoint:
    """A validated point of ``S_d``."""

    coords: tuple

    def __post_init__(self):
        c = tuple(float(x) for x in np.atleast_1d(self.coords))
        if len(c) == 0:
            raise DomainError("a simplex point needs at least one coordinate")
        if not contains(c, DEFAULT_TOL):
            raise DomainError(f"{c} is not in the simplex")
        object.__setattr__(self, "coords", c)

    @property
    def d(self):
        return len(self.coords)

    @property
    def norm1(self):
        return math.fsum(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)


@dataclass(frozen=True)
class IntegralEstimate:
    """Quadrature result; ``stderr`` is zero for exact or constant cases."""

    value: float
    stderr: float
    n_points: int


def contains(v, tol=DEFAULT_TOL):
    """True iff every coordinate is ``>= -tol`` and the sum is ``<= 1 + tol``."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)):
        return False
    return bool(v.min() >= -tol and v.sum() <= 1.0 + tol)


def _rows_inside(X, tol):
    finite = np.all(np.isfinite(X), axis=1)
    with np.errstate(invalid="ignore"):
        return finite & (X.min(axis=1) >= -tol) & (X.sum(axis=1) <= 1.0 + tol)


def as_point(s, d=None, tol=DEFAULT_TOL):
    """Validate a single point and return it as a 1-D array.

    Coordinates within ``tol`` outside the simplex are pulled back onto it.
    """
    arr = np.atleast_1d(np.asarray(s, dtype=float))
    if arr.ndim != 1:
        raise DomainError(f"expected a single point, got shape {arr.shape}")
    if d is not None and arr.size != d:
        raise DomainError(f"expected dimension {d}, got {arr.size}")
    if not contains(arr, tol):
        raise DomainError(f"{arr.tolist()} is not in the simplex")
    return _clip(arr[None, :])[0]


def as_points(X, d=None, tol=DEFAULT_TOL):
    """Validate a collection of points and return an ``(n, d)`` array.

    A 1-D input is read as ``n`` points of a one-dimensional simplex unless
    ``d`` says otherwise.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if (d is not None and d > 1) else arr[:, None]
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise DomainError(f"points must form an (n, d) array, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise DomainError(f"expected dimension {d}, got {arr.shape[1]}")
    inside = _rows_inside(arr, tol)
    if not np.all(inside):
        i = int(np.flatnonzero(~inside)[0])
        raise DomainError(f"point {i} = {arr[i].tolist()} is not in the simplex")
    return _clip(arr)


def _clip(X):
    X = np.clip(X, 0.0, None)
    total = X.sum(axis=1)
    over = total > 1.0
    if np.any(over):
        X = X.copy()
        X[over] /= total[over, None]
        _fix_rounding(X)
    return X


def _fix_rounding(X):
    # normalized rows can still sum to 1 + ulp; shave until they do not
    for _ in range(8):
        over = X.sum(axis=1) > 1.0
        if not np.any(over):
            return
        X[over] = np.nextafter(X[over], 0.0)


def in_interior_region(s, b, tol=DEFAULT_TOL):
    """Membership in ``S_d(b)``: all coordinates and ``1 - |s|_1`` at least ``b``.

    Comparisons allow ``tol`` of slack, so ``(0.45, 0.45)`` lies in
    ``S_2(0.1)`` even though ``1 - 0.9`` rounds below ``0.1``.
    """
    if not 0.0 < b < 1.0:
        raise DomainError(f"bandwidth must lie in (0, 1), got {b}")
    s = as_point(s)
    return bool(s.min() >= b - tol and 1.0 - s.sum() >= b - tol)


def sample_uniform(d, n, seed=None):
    """Draw ``n`` points uniformly from ``S_d``.

    Uses ``d + 1`` unit exponentials normalized by their sum (a flat
    Dirichlet draw) and drops the last coordinate.
    """
    if d < 1 or n < 1:
        raise DomainError("sample_uniform needs d >= 1 and n >= 1")
    rng = make_rng(seed)
    E = rng.standard_exponential((n, d + 1))
    X = E[:, :d] / E.sum(axis=1)[:, None]
    _fix_rounding(X)
    return X


def _standard_gamma(rng, shape, size):
    """Log of standard gamma draws; shapes below one use the boost
    ``G(a) = G(a + 1) * U**(1/a)`` on top of numpy's Marsaglia-Tsang."""
    shape = np.asarray(shape, dtype=float)
    small = shape < 1.0
    boosted = np.where(small, shape + 1.0, shape)
    g = rng.standard_gamma(boosted, size=size)
    with np.errstate(divide="ignore"):
        logg = np.log(g)
    if np.any(small):
        u = rng.random(size=size)
        logg = logg + np.where(small, np.log(u) / shape, 0.0)
    return logg


def sample_dirichlet(params, n, seed=None):
    """Draw ``n`` Dirichlet(u_1, ..., u_d, v) vectors; first ``d`` coordinates.

    ``params`` is any object with attributes ``u`` (length ``d``) and ``v``,
    normally a :class:`dirichlet_kde.kernel.DirichletParams`.
    """
    shapes = np.append(np.asarray(params.u, dtype=float), float(params.v))
    if not np.all(np.isfinite(shapes)) or np.any(shapes <= 0):
        raise DomainError("Dirichlet parameters must be finite and positive")
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = make_rng(seed)
    d = shapes.size - 1
    if np.all(shapes >= 1.0):
        G = rng.standard_gamma(shapes, size=(n, d + 1))
        X = G[:, :d] / G.sum(axis=1)[:, None]
    else:
        logG = _standard_gamma(rng, shapes, (n, d + 1))
        top = logG.max(axis=1, keepdims=True)
        W = np.exp(logG - top)
        X = W[:, :d] / W.sum(axis=1)[:, None]
    _fix_rounding(X)
    return X


def _check_finite(values, points):
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NumericalError(
            f"integrand is {values[i]} at {points[i].tolist()} "
            f"({int(bad.sum())} non-finite values)"
        )


def integrate_mc(f, d, n_points, seed=None, *, proposal=None, defensive=0.1):
    """Monte Carlo estimate of the integral of ``f`` over ``S_d``.

    By default points are uniform on the simplex and the estimate is
    ``mean(f) / d!`` with standard error ``std(f) / sqrt(n) / d!``.

    Parameters
    ----------
    f : callable
        Vectorized integrand mapping an ``(m, d)`` array to ``m`` values.
    d : int
        Dimension of the simplex.
    n_points : int
        Number of draws, at least 100.
    seed : int, SeedSequence or Generator
        Source of randomness; equal seeds give bit-identical results.
    proposal : DirichletParams, optional
        Importance-sampling proposal. Draws come from the mixture
        ``defensive * uniform + (1 - defensive) * Dirichlet(proposal)`` and
        are weighted by ``f / q``. Useful for sharply peaked integrands such
        as the kernel itself, where uniform draws leave a huge variance.
    defensive : float
        Uniform mixture weight in ``[0, 1]`` when ``proposal`` is given.

    Raises
    ------
    NumericalError
        If ``f`` returns a non-finite value; the message names the point.
    """
    if n_points < 100:
        raise DomainError("integrate_mc needs at least 100 points")
    rng = make_rng(seed)
    if proposal is None:
        X = sample_uniform(d, n_points, rng)
        values = np.asarray(f(X), dtype=float).reshape(n_points)
        _check_finite(values, X)
        denom = float(math.factorial(d))
    else:
        if not 0.0 <= defensive <= 1.0:
            raise DomainError("defensive weight must lie in [0, 1]")
        from .kernel import kernel_log_density

        if len(proposal.u) != d:
            raise DomainError("proposal dimension does not match d")
        pick_uniform = rng.random(n_points) < defensive
        X = sample_dirichlet(proposal, n_points, rng)
        n_unif = int(pick_uniform.sum())
        if n_unif:
            X[pick_uniform] = sample_uniform(d, n_unif, rng)
        q = defensive * math.factorial(d) + (1.0 - defensive) * np.exp(
            kernel_log_density(proposal, X)
        )
        fx = np.asarray(f(X), dtype=float).reshape(n_points)
        _check_finite(fx, X)
        values = fx / q
        denom = 1.0
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1))
    return IntegralEstimate(
        value=mean / denom,
        stderr=std / math.sqrt(n_points) / denom,
        n_points=n_points,
    )


def _stick_breaking(W):
    """Map the unit cube onto ``S_d``; returns points and Jacobians."""
    n, d = W.shape
    S = np.empty_like(W)
    remaining = np.ones(n)
    jac = np.ones(n)
    for k in range(d):
        S[:, k] = W[:, k] * remaining
        jac *= remaining
        remaining = remaining * (1.0 - W[:, k])
    return S, jac


def _grid_rule(f, d, m):
    nodes, weights = np.polynomial.legendre.leggauss(m)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    mesh = np.meshgrid(*([nodes] * d), indexing="ij")
    wmesh = np.meshgrid(*([weights] * d), indexing="ij")
    W = np.column_stack([g.ravel() for g in mesh])
    w = np.prod(np.column_stack([g.ravel() for g in wmesh]), axis=1)
    S, jac = _stick_breaking(W)
    values = np.asarray(f(S), dtype=float).reshape(len(S))
    _check_finite(values, S)
    return math.fsum(w * jac * values), len(S)


def integrate_grid(f, d, n_per_axis=32):
    """Deterministic tensor Gauss-Legendre rule through the stick-breaking map.

    Accurate for smooth integrands; boundary singularities call for
    :func:`integrate_mc`. ``stderr`` reports the difference from the rule
    with half as many nodes per axis, a cheap error indicator.
    """
    if d < 1 or n_per_axis < 2:
        raise DomainError("integrate_grid needs d >= 1 and n_per_axis >= 2")
    value, npts = _grid_rule(f, d, n_per_axis)
    coarse, _ = _grid_rule(f, d, max(1, n_per_axis // 2))
    return IntegralEstimate(value=value, stderr=abs(value - coarse), n_points=npts)
