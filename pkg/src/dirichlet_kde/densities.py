"""Test densities on the simplex and a numeric Hoelder probe.

Three families are provided:

* ``f0``: the uniform density ``d!``;
* ``f3``: the linear density ``(d - 1)! (d + 1) |s|_1``;
* ``fbeta``: the uniform density plus a lattice of alternating-sign
  ``beta``-Hoelder bumps of half-width ``3 sqrt(b)`` in the L1 norm.

Density objects are vectorized callables on ``(m, d)`` arrays and carry a
rejection sampler with a closed-form envelope.
"""

import itertools
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._rng import make_rng
from .errors import DomainError, EnvelopeError, SpecValidationError
from .simplex import as_point, as_points, sample_uniform

__all__ = [
    "Density",
    "HolderClass",
    "HolderProbe",
    "LinearDensity",
    "SpikyDensity",
    "SpikyDensitySpec",
    "UniformDensity",
    "empirical_holder_seminorm",
    "f0_eval",
    "f3_eval",
    "f3_exact_bias",
    "fbeta_eval",
    "make_density",
    "sample_density",
    "spike_centers",
]


@dataclass(frozen=True)
class HolderClass:
    """The Hoelder ball ``Sigma(d, beta, L)``; ``m`` is the largest integer below ``beta``."""

    d: int
    beta: float
    L: float

    def __post_init__(self):
        if self.d < 1 or not self.beta > 0 or not self.L > 0:
            raise DomainError("HolderClass needs d >= 1, beta > 0, L > 0")

    @property
    def m(self):
        return math.ceil(self.beta) - 1


@dataclass(frozen=True)
class SpikyDensitySpec:
    """Validated parameters of the spiky density ``f_beta``.

    Raises :class:`SpecValidationError` listing every violated constraint.
    """

    d: int
    beta: float
    L: float
    b: float

    def __post_init__(self):
        problems = []
        if int(self.d) != self.d or self.d < 1:
            problems.append(f"d must be a positive integer, got {self.d}")
        if not 0.0 < self.beta <= 2.0:
            problems.append(f"beta must lie in (0, 2], got {self.beta}")
        if not self.L > 0:
            problems.append(f"L must be positive, got {self.L}")
        if not self.b > 0:
            problems.append(f"b must be positive, got {self.b}")
        if problems:
            raise SpecValidationError(problems)
        object.__setattr__(self, "d", int(self.d))
        d, beta, L, b = self.d, float(self.beta), float(self.L), float(self.b)
        fact = math.factorial(d)
        b_max = min(1.0 / (4 * d) ** 2, ((fact / L) ** (1.0 / beta) / 3.0) ** 2)
        if b > b_max:
            problems.append(f"b = {b} exceeds the admissible maximum {b_max}")
        h = self.half_width
        lo = 1.0 / (4 * d) + h * (2 * 1 - 1) - h
        hi_center = 1.0 / (4 * d) + h * (2 * (2 * self.N) - 1)
        if lo < 0.0 or d * hi_center + h > 1.0:
            problems.append(
                f"spike supports leave the simplex (outermost reaches |s|_1 = {d * hi_center + h})"
            )
        gaps = np.diff(self.axis_centers())
        if gaps.size and gaps.min() < 2.0 * h * (1.0 - 1e-12):
            problems.append("spike supports overlap")
        if not self.min_value > 0.0:
            problems.append(f"f_beta minimum {self.min_value} is not positive")
        if problems:
            raise SpecValidationError(problems)

    @property
    def L_beta(self):
        return self.L * min(1.0, 1.0 / self.beta)

    @property
    def N(self):
        return math.ceil(1.0 / (24 * self.d * math.sqrt(self.b)))

    @property
    def half_width(self):
        return 3.0 * math.sqrt(self.b)

    @property
    def amplitude(self):
        return self.L_beta * self.half_width**self.beta

    @property
    def n_spikes(self):
        return (2 * self.N) ** self.d

    @property
    def min_value(self):
        return math.factorial(self.d) - self.amplitude

    @property
    def max_value(self):
        return math.factorial(self.d) + self.amplitude

    def axis_centers(self):
        """Spike center coordinates along one axis, ``k = 1..2N``."""
        k = np.arange(1, 2 * self.N + 1)
        return 1.0 / (4 * self.d) + self.half_width * (2 * k - 1)

    def to_dict(self):
        centers, signs = spike_centers(self)
        return {
            "d": self.d,
            "beta": self.beta,
            "L": self.L,
            "b": self.b,
            "L_beta": self.L_beta,
            "N": self.N,
            "half_width": self.half_width,
            "amplitude": self.amplitude,
            "centers": centers.tolist(),
            "signs": signs.tolist(),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def spike_centers(spec):
    """All ``(2N)^d`` spike centers in lexicographic ``k`` order and their signs.

    Returns
    -------
    centers : ndarray, shape (n_spikes, d)
    signs : ndarray of int, ``(-1)**k_1``
    """
    axis = spec.axis_centers()
    ks = np.array(list(itertools.product(range(1, 2 * spec.N + 1), repeat=spec.d)))
    centers = axis[ks - 1]
    signs = np.where(ks[:, 0] % 2 == 0, 1, -1)
    return centers, signs


class Density:
    """Base class: a density on ``S_d`` with an envelope for rejection sampling."""

    name = "density"

    def __init__(self, d):
        if int(d) != d or d < 1:
            raise DomainError(f"d must be a positive integer, got {d}")
        self.d = int(d)

    def __call__(self, S):
        return self._eval(as_points(S, self.d))

    def _eval(self, S):
        raise NotImplementedError

    @property
    def sup(self):
        raise NotImplementedError

    def describe(self):
        return {"density": self.name, "d": self.d}

    def sample(self, n, seed=None):
        """``n`` i.i.d. draws by rejection from the uniform proposal."""
        if n < 1:
            raise DomainError("n must be >= 1")
        rng = make_rng(seed)
        envelope = self.sup
        fact = math.factorial(self.d)
        accept_rate = fact / envelope
        chunks = []
        have = 0
        while have < n:
            m = int((n - have) / accept_rate * 1.1) + 64
            X = sample_uniform(self.d, m, rng)
            fx = self._eval(X)
            if np.any(fx > envelope * (1.0 + 1e-12)):
                i = int(np.argmax(fx))
                raise EnvelopeError(
                    f"{self.name}: value {fx[i]} at {X[i].tolist()} exceeds envelope {envelope}"
                )
            keep = rng.random(m) * envelope < fx
            chunks.append(X[keep])
            have += int(keep.sum())
        return np.concatenate(chunks)[:n]


class UniformDensity(Density):
    """``f0 = d!`` on the simplex."""

    name = "f0"

    def _eval(self, S):
        return np.full(len(S), float(math.factorial(self.d)))

    @property
    def sup(self):
        return float(math.factorial(self.d))

    def sample(self, n, seed=None):
        return sample_uniform(self.d, n, make_rng(seed))


class LinearDensity(Density):
    """``f3 = (d - 1)! (d + 1) |s|_1``; infinitely smooth, so in every Hoelder class."""

    name = "f3"

    @property
    def scale(self):
        return float(math.factorial(self.d - 1) * (self.d + 1))

    def _eval(self, S):
        return self.scale * S.sum(axis=1)

    @property
    def sup(self):
        return self.scale


class SpikyDensity(Density):
    """The density ``f_beta`` for a validated :class:`SpikyDensitySpec`."""

    name = "fbeta"

    def __init__(self, spec):
        super().__init__(spec.d)
        self.spec = spec

    def _eval(self, S):
        spec = self.spec
        h = spec.half_width
        origin = 1.0 / (4 * spec.d)
        # each L1 ball sits in its own axis-aligned cell of side 2h
        idx = np.floor((S - origin) / (2.0 * h))
        inside = np.all((idx >= 0) & (idx < 2 * spec.N), axis=1)
        out = np.full(len(S), float(math.factorial(spec.d)))
        if np.any(inside):
            k = idx[inside] + 1.0
            t = origin + h * (2.0 * k - 1.0)
            r = np.abs((S[inside] - t) / h).sum(axis=1)
            psi = np.maximum(0.0, 1.0 - r**spec.beta)
            sign = np.where(k[:, 0] % 2 == 0, 1.0, -1.0)
            out[inside] += spec.amplitude * sign * psi
        return out

    @property
    def sup(self):
        return self.spec.max_value

    def describe(self):
        return {"density": self.name, "d": self.d, "beta": self.spec.beta,
                "L": self.spec.L, "spike_b": self.spec.b}


def make_density(name, d, beta=None, L=1.0, spike_b=None):
    """Build ``f0``, ``f3`` or ``fbeta`` by name."""
    if name == "f0":
        return UniformDensity(d)
    if name == "f3":
        return LinearDensity(d)
    if name == "fbeta":
        if beta is None or spike_b is None:
            raise DomainError("fbeta needs beta and spike_b")
        return SpikyDensity(SpikyDensitySpec(d, beta, L, spike_b))
    raise DomainError(f"unknown density {name!r}; expected f0, f3 or fbeta")


def _single(s):
    s = as_point(s)
    return s[None, :], s.size


def f0_eval(s):
    """Uniform density ``d!`` at a single point."""
    S, d = _single(s)
    return float(UniformDensity(d)._eval(S)[0])


def f3_eval(s):
    """Linear density ``(d - 1)! (d + 1) |s|_1`` at a single point."""
    S, d = _single(s)
    return float(LinearDensity(d)._eval(S)[0])


def fbeta_eval(spec, s):
    """Spiky density at a single point."""
    S = as_point(s, spec.d)[None, :]
    return float(SpikyDensity(spec)._eval(S)[0])


def sample_density(which, n, seed=None, d=None):
    """Draw from ``"f0"``/``"f3"`` (with ``d``), a spec, or a :class:`Density`."""
    if isinstance(which, Density):
        density = which
    elif isinstance(which, SpikyDensitySpec):
        density = SpikyDensity(which)
    else:
        if d is None:
            raise DomainError("d is required when the density is given by name")
        density = make_density(which, d)
    return density.sample(n, seed)


def f3_exact_bias(s, b):
    """Exact bias ``E f_hat(s) - f3(s)`` of the estimator under ``f3``.

    ``f3`` is linear, so the bias is ``(d - 1)! (d + 1) sum_i (E xi_i - s_i)``
    with ``E xi_i = (s_i + b) / (1 + b (d + 1))``, which sums to
    ``b (d - (d + 1) |s|_1) / (1 + b (d + 1))``. The bias is positive near
    the origin and vanishes on ``|s|_1 = d / (d + 1)``.
    """
    if not b > 0:
        raise DomainError(f"bandwidth must be positive, got {b}")
    s = as_point(s)
    d = s.size
    scale = math.factorial(d - 1) * (d + 1)
    return scale * b * (d - (d + 1) * float(s.sum())) / (1.0 + b * (d + 1))


class HolderProbe(NamedTuple):
    """Largest observed Hoelder quotient and the pair bookkeeping."""

    seminorm: float
    pairs_used: int
    pairs_skipped: int


def _l1_directions(rng, n, d):
    mag = rng.standard_exponential((n, d))
    sign = np.where(rng.random((n, d)) < 0.5, -1.0, 1.0)
    return sign * mag / mag.sum(axis=1)[:, None]


def empirical_holder_seminorm(f, holder, n_pairs=10_000, step=1e-5, seed=None,
                              max_distance=0.1):
    """Lower bound on the Hoelder seminorm of ``f`` from random nearby pairs.

    Pairs ``(s, t)`` are drawn with ``s`` uniform and ``t`` at an L1
    distance log-uniform in ``[min_distance, max_distance]``. For
    ``beta <= 1`` the quotient is ``|f(s) - f(t)| / |s - t|_1**beta``; for
    ``beta in (1, 2]`` first partial derivatives, taken by central
    differences with ``step``, replace ``f``. Pairs closer than ``10*step``
    to the boundary are skipped and counted.
    """
    m = holder.m
    if m > 1:
        raise DomainError("the probe supports beta in (0, 2]")
    d = holder.d
    rng = make_rng(seed)
    margin = 10.0 * step if m == 1 else 0.0
    min_distance = 10.0 * step if m == 1 else 1e-6
    S = sample_uniform(d, n_pairs, rng)
    r = 10.0 ** rng.uniform(np.log10(min_distance), np.log10(max_distance), n_pairs)
    T = S + r[:, None] * _l1_directions(rng, n_pairs, d)

    def interior(P):
        return (P.min(axis=1) > margin) & (1.0 - P.sum(axis=1) > margin)

    ok = interior(S) & interior(T)
    S, T = S[ok], T[ok]
    skipped = n_pairs - len(S)
    if len(S) == 0:
        return HolderProbe(0.0, 0, skipped)
    dist = np.abs(S - T).sum(axis=1)
    if m == 0:
        diffs = np.abs(np.asarray(f(S)) - np.asarray(f(T)))
    else:
        diffs = np.zeros(len(S))
        for k in range(d):
            e = np.zeros(d)
            e[k] = step
            gs = (np.asarray(f(S + e)) - np.asarray(f(S - e))) / (2.0 * step)
            gt = (np.asarray(f(T + e)) - np.asarray(f(T - e))) / (2.0 * step)
            diffs = np.maximum(diffs, np.abs(gs - gt))
    ratios = diffs / dist ** (holder.beta - m)
    return HolderProbe(float(ratios.max()), len(S), skipped)
