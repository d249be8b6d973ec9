"""Log-gamma and the Stirling ratio, evaluated in log space.

Kernel shapes grow like ``1/b``, so gamma values overflow long before the
bandwidths of interest are reached. Everything here works with logarithms
and exponentiates only at the very end, if at all.
"""

import numpy as np
from scipy.special import gammaln, zeta

from .errors import DomainError

__all__ = ["log_gamma", "log_stirling_ratio", "stirling_ratio"]

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_EULER_GAMMA = 0.57721566490153286061

# lgamma(1 + e) = -gamma*e + sum_{k>=2} (-1)^k zeta(k) e^k / k, |e| < 1
_ROOT_SERIES_TERMS = 30
_ROOT_COEFFS = np.array(
    [(-1.0) ** k * zeta(k) / k for k in range(_ROOT_SERIES_TERMS, 1, -1)]
)
_ROOT_RADIUS = 0.2

# Stirling series for lgamma(z + 1): B_2k / (2k (2k-1) z^(2k-1)), k = 1..6
_STIRLING_COEFFS = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
)
_STIRLING_SERIES_MIN = 10.0


def _lgamma_1p(e):
    """ln Gamma(1 + e) for |e| <= 0.2, accurate relative to the result."""
    acc = np.zeros_like(e)
    for c in _ROOT_COEFFS:
        acc = acc * e + c
    # acc now holds sum_{k>=2} c_k e^(k-2)
    return e * (-_EULER_GAMMA + e * acc)


def log_gamma(x):
    """Natural log of the gamma function for positive real arguments.

    Near the two roots of ln Gamma (x = 1 and x = 2) a Taylor series in
    ``x - 1`` is used so that the relative error stays at the level of
    machine precision; elsewhere the value comes from
    :func:`scipy.special.gammaln`.

    Parameters
    ----------
    x : float or array_like
        Strictly positive, finite argument(s).

    Returns
    -------
    float or ndarray
        ``ln Gamma(x)`` with the shape of ``x``.

    Raises
    ------
    DomainError
        If any argument is non-finite or not strictly positive.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("log_gamma requires finite x > 0")
    out = np.atleast_1d(gammaln(arr))
    arr = np.atleast_1d(arr)
    near1 = np.abs(arr - 1.0) < _ROOT_RADIUS
    near2 = np.abs(arr - 2.0) < _ROOT_RADIUS
    if np.any(near1):
        e = arr[near1] - 1.0  # exact (Sterbenz)
        out[near1] = _lgamma_1p(e)
    if np.any(near2):
        e = arr[near2] - 2.0
        out[near2] = np.log1p(e) + _lgamma_1p(e)
    if np.ndim(x) == 0:
        return float(out[0])
    return out


def log_stirling_ratio(z):
    """Logarithm of :func:`stirling_ratio`; ``-inf`` at ``z = 0``."""
    arr = np.asarray(z, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("stirling_ratio requires z >= 0")
    out = np.empty_like(arr)
    zero = arr == 0
    big = arr >= _STIRLING_SERIES_MIN
    mid = ~(zero | big)
    out[zero] = -np.inf
    if np.any(mid):
        zm = arr[mid]
        out[mid] = _HALF_LOG_2PI - zm + (zm + 0.5) * np.log(zm) - log_gamma(zm + 1.0)
    if np.any(big):
        # the direct form cancels catastrophically for large z
        zb = arr[big]
        inv = 1.0 / zb
        inv2 = inv * inv
        series = np.zeros_like(zb)
        for c in reversed(_STIRLING_COEFFS):
            series = series * inv2 + c
        out[big] = -series * inv
    if out.ndim == 0:
        return float(out)
    return out


def stirling_ratio(z):
    r"""Ratio of Stirling's approximation to the gamma function.

    .. math::

        R(z) = \frac{\sqrt{2\pi}\, e^{-z} z^{z + 1/2}}{\Gamma(z + 1)},

    with ``R(0) = 0`` as the continuous extension. ``R`` is increasing on
    ``[1, inf)``, stays below one there, and tends to one as ``z -> inf``.
    """
    return np.exp(log_stirling_ratio(z))
