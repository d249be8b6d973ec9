"""The Dirichlet kernel and the density estimator built on it.

For an evaluation point ``s`` and bandwidth ``b`` the estimator averages the
Dirichlet density with shapes ``u = s/b + 1`` and ``v = (1 - |s|_1)/b + 1``
over the sample. Shapes reach ``1/b``, so all kernel arithmetic happens in
log space with a single ``exp`` at the end.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._rng import make_rng
from .errors import DomainError
from .simplex import IntegralEstimate, as_point, as_points, sample_dirichlet
from .special_fn import log_gamma, log_stirling_ratio

__all__ = [
    "BandwidthSpec",
    "DirichletKDE",
    "DirichletParams",
    "EstimateField",
    "ShiftFactorization",
    "bandwidth_rule",
    "estimate",
    "estimate_field",
    "estimator_params",
    "expected_estimate",
    "kernel_log_density",
    "kernel_shift_value",
    "log_theoretical_variance_factor",
    "shift_factorization",
    "theoretical_variance_factor",
    "variance_approx",
    "xi_mean_var",
]

_LOG_2PI = math.log(2.0 * math.pi)
# elements per block in the kernel matrix; keeps the working set in cache
_BLOCK_ELEMENTS = 1 << 16


@dataclass(frozen=True)
class DirichletParams:
    """Shape parameters ``(u_1, ..., u_d; v)`` of a Dirichlet kernel."""

    u: tuple
    v: float

    def __post_init__(self):
        u = tuple(float(x) for x in np.atleast_1d(self.u))
        v = float(self.v)
        if not u:
            raise DomainError("u must have at least one component")
        if not all(math.isfinite(x) and x > 0 for x in u + (v,)):
            raise DomainError(f"Dirichlet parameters must be positive, got u={u}, v={v}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def d(self):
        return len(self.u)


@dataclass(frozen=True)
class BandwidthSpec:
    """Either a fixed bandwidth or the rule ``b_n = c * n**(-2/(d + 2*beta))``."""

    b: float | None = None
    c: float | None = None
    beta: float | None = None

    def __post_init__(self):
        fixed = self.b is not None
        rule = self.c is not None or self.beta is not None
        if fixed == rule:
            raise DomainError("give either b, or both c and beta")
        if fixed and not self.b > 0:
            raise DomainError("bandwidth must be positive")
        if rule and (self.c is None or self.beta is None or self.c <= 0 or self.beta <= 0):
            raise DomainError("the bandwidth rule needs c > 0 and beta > 0")

    @classmethod
    def fixed(cls, b):
        return cls(b=b)

    @classmethod
    def rule(cls, c, beta):
        return cls(c=c, beta=beta)

    def at(self, n, d):
        """Bandwidth for sample size ``n`` in dimension ``d``; must land in (0, 1)."""
        b = self.b if self.b is not None else bandwidth_rule(self.c, n, d, self.beta)
        if not 0.0 < b < 1.0:
            raise DomainError(f"bandwidth {b} for n={n} is outside (0, 1)")
        return b


@dataclass
class EstimateField:
    """Estimator values at a set of evaluation points."""

    eval_points: np.ndarray
    values: np.ndarray
    n: int
    b: float


def _norm1(X):
    # fixed left-to-right order so that single points and batches agree bitwise
    total = X[:, 0].copy()
    for k in range(1, X.shape[1]):
        total += X[:, k]
    return total


def _log1m_norm(X):
    with np.errstate(divide="ignore"):
        return np.log1p(-np.minimum(_norm1(X), 1.0))


def _log_normalizer(U, V):
    total = _norm1(U) + V
    c = log_gamma(total) - log_gamma(V)
    for k in range(U.shape[1]):
        c -= log_gamma(U[:, k])
    return c


def _xlogy(e, logx):
    # e * log(x) with the convention 0 * log(0) = 0
    with np.errstate(invalid="ignore"):
        return np.where(e == 0.0, 0.0, e * logx)


def _stirling_g(a):
    """``lgamma(a + 1) - (a ln a - a)``, zero at ``a = 0``."""
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    pos = a > 0
    if np.any(pos):
        out[pos] = 0.5 * (_LOG_2PI + np.log(a[pos])) - log_stirling_ratio(a[pos])
    return out


def _log_kernel_stirling(u, v, X):
    # ln K = sum_i [a_i ln(x_i/p_i) - g(a_i)] + A ln(1 + d/A) + d ln(A + d) - d + g(A + d)
    # with a = shapes - 1, A = sum(a), p = a / A. Avoids the O(1/b) cancellation
    # between the gamma normalizer and the power terms.
    d = len(u)
    a = np.append(np.asarray(u) - 1.0, v - 1.0)
    A = math.fsum(a)
    p = a / A
    cols = np.column_stack([X, np.maximum(1.0 - _norm1(X), 0.0)])
    out = np.full(len(X), A * math.log1p(d / A) + d * math.log(A + d) - d)
    out += _stirling_g(A + d)
    for i in range(d + 1):
        if a[i] == 0.0:
            continue
        with np.errstate(divide="ignore"):
            out += a[i] * np.log1p((cols[:, i] - p[i]) / p[i])
        out -= _stirling_g(a[i])
    return out


def kernel_log_density(params, x, method="direct"):
    """Log of the Dirichlet density with shapes ``params`` at ``x``.

    Parameters
    ----------
    params : DirichletParams
    x : array_like
        A single point (length ``d``) or an ``(m, d)`` array of points in
        the simplex. For ``d = 1`` a 1-D array is read as ``m`` points.
    method : {"direct", "stirling"}
        ``"direct"`` evaluates the gamma normalizer and the power terms
        separately; it is the form used by the estimator. ``"stirling"``
        rewrites the normalizer through Stirling ratios so the large terms
        cancel analytically, which keeps about ten more bits at bandwidths
        near ``1e-5``. It requires all shapes ``>= 1``.

    Returns
    -------
    float or ndarray
        ``-inf`` where a zero base carries a positive exponent; ``+inf``
        only where a zero base carries a negative exponent (shapes < 1).
    """
    d = params.d
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 0 or (arr.ndim == 1 and (d > 1 or arr.size == 1))
    X = as_points(arr.reshape(1, -1) if single else arr, d)
    U = np.asarray(params.u)[None, :]
    V = np.array([params.v])
    if method == "stirling":
        if min(params.u) < 1.0 or params.v < 1.0:
            raise DomainError("the stirling method needs all shapes >= 1")
        out = _log_kernel_stirling(np.asarray(params.u), params.v, X)
    elif method == "direct":
        c = _log_normalizer(U, V)[0]
        with np.errstate(divide="ignore"):
            LX = np.log(X)
        out = _xlogy(V[0] - 1.0, _log1m_norm(X))
        for k in range(d):
            out = out + _xlogy(U[0, k] - 1.0, LX[:, k])
        out = out + c
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out[0]) if single else out


def _estimator_shapes(S, b):
    U = S / b + 1.0
    V = np.maximum(1.0 - _norm1(S), 0.0) / b + 1.0
    return U, V


def estimator_params(s, b):
    """Kernel shapes used by the estimator at ``s``: ``u = s/b + 1``, ``v = (1 - |s|_1)/b + 1``."""
    if not b > 0:
        raise DomainError(f"bandwidth must be positive, got {b}")
    s = as_point(s)
    U, V = _estimator_shapes(s[None, :], b)
    return DirichletParams(tuple(U[0]), float(V[0]))


class DirichletKDE:
    """Dirichlet kernel density estimator on the simplex.

    Parameters
    ----------
    sample : array_like
        ``(n, d)`` observations in the simplex; a 1-D array is a
        one-dimensional sample.
    b : float
        Bandwidth in ``(0, 1)``.

    Examples
    --------
    >>> rng = np.random.default_rng(0)
    >>> kde = DirichletKDE(rng.random(500), b=0.05)
    >>> kde([0.25, 0.5, 0.75]).shape
    (3,)
    """

    def __init__(self, sample, b):
        self.sample = as_points(sample)
        self.n, self.d = self.sample.shape
        self.b = _check_bandwidth(b)
        with np.errstate(divide="ignore"):
            # one contiguous row per coordinate for broadcasting against blocks
            self._LX = np.ascontiguousarray(np.log(self.sample).T)
        self._L1 = _log1m_norm(self.sample)
        self._interior = bool(np.all(np.isfinite(self._LX)) and np.all(np.isfinite(self._L1)))

    def evaluate(self, points, b=None):
        """Estimated density at ``points``; ``b`` overrides the bandwidth."""
        b = self.b if b is None else _check_bandwidth(b)
        S = as_points(points, self.d)
        U, V = _estimator_shapes(S, b)
        c = _log_normalizer(U, V)
        U1 = U - 1.0
        V1 = V - 1.0
        m = len(S)
        out = np.empty(m)
        rows = max(1, _BLOCK_ELEMENTS // self.n)
        buf = np.empty((min(rows, m), self.n))
        tmp = np.empty_like(buf)
        for start in range(0, m, rows):
            stop = min(start + rows, m)
            B = buf[: stop - start]
            T = tmp[: stop - start]
            if self._interior:
                np.multiply(V1[start:stop, None], self._L1, out=B)
                for k in range(self.d):
                    np.multiply(U1[start:stop, k, None], self._LX[k], out=T)
                    B += T
            else:
                B[:] = _xlogy(V1[start:stop, None], self._L1)
                for k in range(self.d):
                    B += _xlogy(U1[start:stop, k, None], self._LX[k])
            B += c[start:stop, None]
            np.exp(B, out=B)
            out[start:stop] = B.sum(axis=1)
        out /= self.n
        return out

    __call__ = evaluate


def _check_bandwidth(b):
    b = float(b)
    if not 0.0 < b < 1.0:
        raise DomainError(f"bandwidth must lie in (0, 1), got {b}")
    return b


def estimate(sample, b, s):
    """Estimator value at a single point ``s``."""
    kde = DirichletKDE(sample, b)
    return float(kde.evaluate(as_point(s, kde.d)[None, :])[0])


def estimate_field(sample, b, eval_points):
    """Estimator values at many points; elementwise equal to :func:`estimate`."""
    kde = DirichletKDE(sample, b)
    S = as_points(eval_points, kde.d)
    return EstimateField(eval_points=S, values=kde.evaluate(S), n=kde.n, b=kde.b)


def xi_mean_var(s, b):
    """Marginal means and variances of the smoothing vector at ``s``.

    Each coordinate of a Dirichlet(s/b + 1, (1 - |s|_1)/b + 1) vector is
    Beta(s_i/b + 1, (1 - s_i)/b + d).

    Returns
    -------
    mean, var : ndarray
        Arrays of length ``d``.
    """
    if not b > 0:
        raise DomainError(f"bandwidth must be positive, got {b}")
    s = as_point(s)
    d = s.size
    alpha = s / b + 1.0
    total = 1.0 / b + d + 1.0
    mean = alpha / total
    var = alpha * ((1.0 - s) / b + d) / (total**2 * (total + 1.0))
    return mean, var


def expected_estimate(f, s, b, n_mc, seed=None):
    """Monte Carlo value of ``E f(xi_s)``, the mean of the estimator at ``s``.

    ``f`` is a vectorized density taking an ``(m, d)`` array.
    """
    params = estimator_params(s, b)
    draws = sample_dirichlet(params, n_mc, make_rng(seed))
    values = np.asarray(f(draws), dtype=float).reshape(n_mc)
    std = float(np.std(values, ddof=1)) if n_mc > 1 else 0.0
    return IntegralEstimate(
        value=float(np.mean(values)), stderr=std / math.sqrt(n_mc), n_points=n_mc
    )


def bandwidth_rule(c, n, d, beta):
    """``c * n**(-2/(d + 2*beta))``."""
    if not (c > 0 and n >= 1 and d >= 1 and beta > 0):
        raise DomainError("bandwidth_rule needs c > 0, n >= 1, d >= 1, beta > 0")
    return c * float(n) ** (-2.0 / (d + 2.0 * beta))


def _interior_point(s):
    s = as_point(s)
    rest = 1.0 - s.sum()
    if s.min() <= 0.0 or rest <= 0.0:
        raise DomainError("s must lie strictly inside the simplex")
    return s, rest


def log_theoretical_variance_factor(s, b):
    """Natural log of :func:`theoretical_variance_factor`."""
    s, rest = _interior_point(s)
    b = _check_bandwidth(b)
    d = s.size
    lr = log_stirling_ratio
    out = 0.5 * (d + 1) * math.log(b) + (d + 0.5) * math.log(1.0 / b + d)
    out -= 0.5 * d * math.log(4.0 * math.pi)
    out -= 0.5 * (math.log(rest) + float(np.sum(np.log(s))))
    out += (2.0 / b + d + 0.5) * math.log1p(d / (2.0 / b + d)) - d
    out += 2.0 * lr(rest / b) + 2.0 * float(np.sum(lr(s / b)))
    out -= lr(2.0 * rest / b) + float(np.sum(lr(2.0 * s / b)))
    out += lr(2.0 / b + d) - 2.0 * lr(1.0 / b + d)
    return out


def theoretical_variance_factor(s, b):
    """Leading variance constant ``A_b(s)`` of the estimator at interior ``s``.

    ``n * Var f_hat(s) ~ A_b(s) f(s)``; ``A_b(s)`` behaves like
    ``b**(-d/2) / ((4 pi)**(d/2) sqrt((1 - |s|_1) s_1 ... s_d))`` as ``b -> 0``.
    """
    return math.exp(log_theoretical_variance_factor(s, b))


def variance_approx(n, s, b, f_value):
    """Leading-order variance ``A_b(s) f(s) / n`` (the O(1/n) correction is dropped)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return theoretical_variance_factor(s, b) * f_value / n


class ShiftFactorization(NamedTuple):
    """``value == center * q`` and ``center == w * r``."""

    value: float
    center: float
    q: float
    w: float
    r: float


def _shift_setup(s, delta, b):
    s = as_point(s)
    d = s.size
    if not 0.0 <= delta < 3.0:
        raise DomainError("delta must lie in [0, 3)")
    b = _check_bandwidth(b)
    if s.min() < 1.0 / (4 * d) or s.max() > 3.0 / (4 * d):
        raise DomainError(f"s must lie in [1/(4d), 3/(4d)]^d, got {s.tolist()}")
    shifted = s + delta * math.sqrt(b)
    if not (shifted.sum() < 1.0):
        raise DomainError("the shifted point leaves the simplex")
    return s, d, b, shifted


def kernel_shift_value(s, delta, b):
    """Kernel centred at ``s`` evaluated at ``s + delta*sqrt(b)`` in every coordinate."""
    s, _, b, shifted = _shift_setup(s, delta, b)
    params = estimator_params(s, b)
    return math.exp(kernel_log_density(params, shifted, method="stirling"))


def shift_factorization(s, delta, b):
    """Split the shifted kernel value into shift, leading and Stirling factors.

    ``q`` is the ratio of the shifted value to the value at the centre,
    ``w`` the closed-form leading term of the centre value and ``r`` the
    product of Stirling ratios, so ``value = w * r * q``.
    """
    s, d, b, _ = _shift_setup(s, delta, b)
    rest = 1.0 - float(s.sum())
    h = delta * math.sqrt(b)
    log_q = (rest / b) * math.log1p(-d * h / rest) + float(np.sum((s / b) * np.log1p(h / s)))
    log_w = (
        -0.5 * d * math.log(b)
        - d
        + (1.0 / b + d + 0.5) * math.log1p(b * d)
        - 0.5 * d * _LOG_2PI
        - 0.5 * (math.log(rest) + float(np.sum(np.log(s))))
    )
    log_r = (
        log_stirling_ratio(rest / b)
        + float(np.sum(log_stirling_ratio(s / b)))
        - log_stirling_ratio(1.0 / b + d)
    )
    center = math.exp(log_w + log_r)
    return ShiftFactorization(
        value=kernel_shift_value(s, delta, b),
        center=center,
        q=math.exp(log_q),
        w=math.exp(log_w),
        r=math.exp(log_r),
    )
