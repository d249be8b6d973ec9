"""Monte Carlo risk experiments for the Dirichlet kernel estimator.

The central quantity is the L^p risk ``E |f_hat - f|_p^p`` estimated over
independent replicates. Replicate ``r`` at sample size ``n`` draws its data
from the substream ``(seed, n, r, 0)`` and its quadrature points from
``(seed, n, r, 1)``, so results depend neither on the position of ``n`` in
the grid nor on how replicates are scheduled across threads.
"""

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import optimize, stats

from ._rng import make_rng
from .densities import (
    Density,
    LinearDensity,
    SpikyDensity,
    UniformDensity,
    f3_exact_bias,
    spike_centers,
)
from .errors import ConfigError, DegenerateFitError, DomainError, NumericalError
from .kernel import (
    BandwidthSpec,
    DirichletKDE,
    expected_estimate,
    variance_approx,
)
from .simplex import as_points, integrate_mc, sample_uniform

__all__ = [
    "BiasScaling",
    "OracleBandwidth",
    "RateFit",
    "RiskExperimentConfig",
    "RiskRow",
    "RiskTable",
    "SCHEMA_VERSION",
    "VarianceRow",
    "bias_scaling_experiment",
    "fit_loglog",
    "fit_rate",
    "in_integral",
    "lp_error",
    "mc_risk",
    "minimax_rate",
    "oracle_bandwidth",
    "optimal_tradeoff_bandwidth",
    "preset",
    "risk_sweep",
    "variance_profile",
]

SCHEMA_VERSION = 1
RISK_COLUMNS = ("n", "b", "p", "risk_p_mean", "risk", "stderr", "reps")

# substream tags under (seed, n, rep)
_TAG_SAMPLE, _TAG_QUAD, _TAG_PILOT_SAMPLE, _TAG_PILOT_QUAD, _TAG_VARIANCE = range(5)


@dataclass(frozen=True)
class OracleBandwidth:
    """Per-``n`` bandwidth chosen by minimizing estimated risk over ``b_grid``.

    The search runs ``pilot_reps`` replicates on their own substreams, with
    the same sample and quadrature points shared by every candidate ``b``.
    The selected bandwidth is then scored afresh with the full replicate
    budget, so the reported risk carries no selection bias.
    """

    b_grid: tuple
    pilot_reps: int = 25
    pilot_quad_points: int | None = None

    def __post_init__(self):
        grid = tuple(float(b) for b in self.b_grid)
        if not grid or any(not 0.0 < b < 1.0 for b in grid):
            raise DomainError("oracle grid bandwidths must lie in (0, 1)")
        if self.pilot_reps < 2:
            raise DomainError("pilot_reps must be >= 2")
        object.__setattr__(self, "b_grid", grid)

    @classmethod
    def logspaced(cls, lo, hi, num=15, **kwargs):
        return cls(tuple(np.geomspace(lo, hi, num).tolist()), **kwargs)


@dataclass(frozen=True)
class RiskExperimentConfig:
    """Everything a risk sweep depends on.

    ``bandwidth`` is a :class:`BandwidthSpec`, an explicit sequence with
    one bandwidth per entry of ``n_grid``, or an :class:`OracleBandwidth`.
    """

    density: Density
    n_grid: tuple
    bandwidth: object
    p: float = 2.0
    reps: int = 200
    quad_points: int = 10_000
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        problems = []
        n_grid = tuple(int(n) for n in self.n_grid)
        if not n_grid or any(n < 1 for n in n_grid):
            problems.append("n_grid must hold positive sample sizes")
        if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
            problems.append("n_grid must be strictly increasing")
        if not self.p >= 1:
            problems.append(f"p must be >= 1, got {self.p}")
        if self.reps < 2:
            problems.append(f"reps must be >= 2, got {self.reps}")
        if self.quad_points < 100:
            problems.append(f"quad_points must be >= 100, got {self.quad_points}")
        if self.threads < 1:
            problems.append("threads must be >= 1")
        bw = self.bandwidth
        if not isinstance(bw, (BandwidthSpec, OracleBandwidth)):
            bw = tuple(float(b) for b in bw)
            if len(bw) != len(n_grid):
                problems.append("an explicit bandwidth list needs one value per n")
            elif any(not 0.0 < b < 1.0 for b in bw):
                problems.append("explicit bandwidths must lie in (0, 1)")
            object.__setattr__(self, "bandwidth", bw)
        if problems:
            raise ConfigError(problems)
        object.__setattr__(self, "n_grid", n_grid)

    @property
    def d(self):
        return self.density.d

    def bandwidth_for(self, n):
        """Bandwidth at ``n`` for fixed, rule and explicit specifications."""
        bw = self.bandwidth
        if isinstance(bw, BandwidthSpec):
            return bw.at(n, self.d)
        if isinstance(bw, OracleBandwidth):
            raise ConfigError("oracle bandwidths are chosen inside risk_sweep")
        return bw[self.n_grid.index(n)]

    def to_dict(self):
        bw = self.bandwidth
        if isinstance(bw, BandwidthSpec):
            band = {"kind": "fixed", "b": bw.b} if bw.b is not None else {
                "kind": "rule", "c": bw.c, "beta": bw.beta}
        elif isinstance(bw, OracleBandwidth):
            band = {"kind": "oracle", "b_grid": list(bw.b_grid),
                    "pilot_reps": bw.pilot_reps, "pilot_quad_points": bw.pilot_quad_points}
        else:
            band = {"kind": "explicit", "b": list(bw)}
        # threads does not influence results, so it stays out of the record
        return {
            "density": self.density.describe(),
            "n_grid": list(self.n_grid),
            "bandwidth": band,
            "p": self.p,
            "reps": self.reps,
            "quad_points": self.quad_points,
            "seed": self.seed,
        }


class RiskRow(NamedTuple):
    """One sample size: ``stderr`` is the standard error of ``risk_p_mean``."""

    n: int
    b: float
    p: float
    risk_p_mean: float
    risk: float
    stderr: float
    reps: int


@dataclass
class RiskTable:
    rows: list
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def _header(self):
        return {"schema": "risk_table", "version": SCHEMA_VERSION, "config": self.config}

    def to_csv(self):
        """CSV text with a one-line ``#`` JSON header carrying schema and config."""
        buf = io.StringIO()
        buf.write("# " + json.dumps(self._header(), sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RISK_COLUMNS)
        for r in self.rows:
            writer.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def to_json(self):
        payload = self._header()
        payload["rows"] = [r._asdict() for r in self.rows]
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_csv(cls, text):
        config = {}
        lines = text.splitlines()
        body = []
        for line in lines:
            if line.startswith("#"):
                try:
                    header = json.loads(line[1:])
                except json.JSONDecodeError:
                    continue
                if header.get("schema") == "risk_table":
                    if header.get("version") != SCHEMA_VERSION:
                        raise ConfigError(f"unsupported risk table version {header.get('version')}")
                    config = header.get("config", {})
            elif line.strip():
                body.append(line)
        reader = csv.DictReader(body)
        missing = set(RISK_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"risk table is missing columns {sorted(missing)}")
        rows = []
        for i, rec in enumerate(reader, start=2):
            try:
                rows.append(RiskRow(
                    n=int(rec["n"]), b=float(rec["b"]), p=float(rec["p"]),
                    risk_p_mean=float(rec["risk_p_mean"]), risk=float(rec["risk"]),
                    stderr=float(rec["stderr"]), reps=int(rec["reps"]),
                ))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"malformed risk table row {i}: {exc}") from None
        return cls(rows, config)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        return cls([RiskRow(**r) for r in payload["rows"]], payload.get("config", {}))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class RateFit(NamedTuple):
    """Least-squares line through ``(ln x, ln y)``."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int
    excluded: tuple = ()

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "n_points": self.n_points,
                "excluded": list(self.excluded)}

    def to_json(self):
        payload = {"schema": "rate_fit", "version": SCHEMA_VERSION, **self.to_dict()}
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def fit_loglog(x, y):
    """OLS of ``ln y`` on ``ln x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise DegenerateFitError("a rate fit needs at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DegenerateFitError("a log-log fit needs positive values")
    if np.all(x == x[0]):
        raise DegenerateFitError("all abscissae are equal")
    lx, ly = np.log(x), np.log(y)
    res = stats.linregress(lx, ly)
    r2 = min(1.0, max(0.0, float(res.rvalue) ** 2))
    return RateFit(float(res.slope), float(res.intercept), r2, int(x.size))


def fit_rate(table, max_rel_stderr=0.2):
    """Fitted exponent of ``risk`` against ``n``.

    The smallest ``n`` is dropped when the standard error of its risk
    exceeds ``max_rel_stderr`` of the risk itself and at least three rows
    remain. The relative error of ``risk = risk_p_mean**(1/p)`` is
    ``stderr / (p * risk_p_mean)`` to first order.
    """
    rows = sorted(table.rows, key=lambda r: r.n)
    if len(rows) < 3:
        raise DegenerateFitError("a rate fit needs at least 3 rows")
    excluded = ()
    first = rows[0]
    if len(rows) > 3 and first.risk_p_mean > 0:
        rel = first.stderr / (first.p * first.risk_p_mean)
        if rel > max_rel_stderr:
            excluded = (first.n,)
            rows = rows[1:]
    fit = fit_loglog([r.n for r in rows], [r.risk for r in rows])
    return fit._replace(excluded=excluded)


def minimax_rate(n, d, beta):
    """``n**(-beta/(d + 2*beta))``."""
    if not (n >= 1 and d >= 1 and beta > 0):
        raise DomainError("minimax_rate needs n >= 1, d >= 1, beta > 0")
    return float(n) ** (-beta / (d + 2.0 * beta))


def _fsum_mean_stderr(values):
    values = [float(v) for v in values]
    k = len(values)
    mean = math.fsum(values) / k
    var = math.fsum((v - mean) ** 2 for v in values) / (k - 1) if k > 1 else 0.0
    return mean, math.sqrt(var / k)


def lp_error(estimator, f, p, quad_points, seed=None):
    """Monte Carlo value of ``int |estimator - f|**p`` over the simplex.

    Parameters
    ----------
    estimator, f : callable
        Vectorized functions on ``(m, d)`` arrays; ``estimator`` is usually
        a :class:`DirichletKDE`. ``f`` must expose ``d`` or be a
        :class:`Density`.
    p : float
        Loss exponent, at least 1.
    quad_points : int
        Number of fresh uniform quadrature points.
    """
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    d = getattr(f, "d", None) or getattr(estimator, "d")

    def integrand(S):
        return np.abs(np.asarray(estimator(S)) - np.asarray(f(S))) ** p

    return integrate_mc(integrand, d, quad_points, seed)


def _replicate_losses(config, n, b_values, reps, quad_points, seed_tags):
    """Loss per replicate and bandwidth; shape ``(reps, len(b_values))``."""
    density = config.density
    sample_tag, quad_tag = seed_tags

    def one(rep):
        sample = density.sample(n, make_rng(config.seed, n, rep, sample_tag))
        kde = DirichletKDE(sample, b_values[0])
        Q = sample_uniform(config.d, quad_points, make_rng(config.seed, n, rep, quad_tag))
        fq = density(Q)
        fact = math.factorial(config.d)
        out = []
        for b in b_values:
            diff = np.abs(kde.evaluate(Q, b) - fq) ** config.p
            if not np.all(np.isfinite(diff)):
                raise NumericalError(f"non-finite loss at n={n}, b={b}, replicate {rep}")
            out.append(math.fsum(diff) / quad_points / fact)
        return out

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            losses = list(pool.map(one, range(reps)))
    else:
        losses = [one(rep) for rep in range(reps)]
    return np.array(losses)


def mc_risk(config, n, b):
    """Replicate-mean L^p risk at sample size ``n`` and bandwidth ``b``."""
    if not 0.0 < b < 1.0:
        raise DomainError(f"bandwidth must lie in (0, 1), got {b}")
    losses = _replicate_losses(
        config, n, [b], config.reps, config.quad_points, (_TAG_SAMPLE, _TAG_QUAD)
    )[:, 0]
    mean, stderr = _fsum_mean_stderr(losses)
    return RiskRow(n=int(n), b=float(b), p=float(config.p), risk_p_mean=mean,
                   risk=mean ** (1.0 / config.p), stderr=stderr, reps=config.reps)


def oracle_bandwidth(config, n):
    """Pilot search for the risk-minimizing bandwidth on the oracle grid."""
    bw = config.bandwidth
    quad = bw.pilot_quad_points or config.quad_points
    losses = _replicate_losses(
        config, n, list(bw.b_grid), bw.pilot_reps, quad, (_TAG_PILOT_SAMPLE, _TAG_PILOT_QUAD)
    )
    means = [math.fsum(col) / len(col) for col in losses.T]
    return bw.b_grid[int(np.argmin(means))]


def risk_sweep(config):
    """:func:`mc_risk` over ``config.n_grid``; rows follow the grid order."""
    rows = []
    for n in config.n_grid:
        if isinstance(config.bandwidth, OracleBandwidth):
            b = oracle_bandwidth(config, n)
        else:
            b = config.bandwidth_for(n)
        rows.append(mc_risk(config, n, b))
    return RiskTable(rows, config.to_dict())


def optimal_tradeoff_bandwidth(n, d, beta, p, tol=1e-10):
    """Minimizer on ``(0, 1)`` of ``b**(beta/2) + |ln b|**(1/p) / (n b**(d/2))**(1/2)``.

    A coarse scan over ``t = ln b`` brackets the minimum, then golden-section
    search refines it.

    Raises
    ------
    NumericalError
        If the scan finds no interior minimum (``n`` too small).
    """
    if not (n >= 1 and d >= 1 and beta > 0 and p >= 1):
        raise DomainError("optimal_tradeoff_bandwidth needs n >= 1, d >= 1, beta > 0, p >= 1")

    def g(t):
        return math.exp(0.5 * beta * t) + (-t) ** (1.0 / p) * math.exp(
            -0.5 * math.log(n) - 0.25 * d * t
        )

    ts = np.linspace(-700.0, -1e-6, 14001)
    gs = np.array([g(t) for t in ts])
    i = int(np.argmin(gs))
    if i == 0 or i == len(ts) - 1:
        raise NumericalError(f"no interior minimum on (0, 1) for n={n}")
    res = optimize.minimize_scalar(
        g, bracket=(ts[i - 1], ts[i], ts[i + 1]), method="golden", tol=tol
    )
    return math.exp(res.x)


def in_integral(b, p, d, quad_points, seed=None):
    """Monte Carlo value of ``int_{S_d(b)} {(1 - |s|_1) s_1 ... s_d}**(-p/4) ds``.

    Uniform draws outside ``S_d(b)`` contribute zero; the integrand is
    formed from log coordinates. ``p = 0`` gives the volume of ``S_d(b)``.
    """
    if not 0.0 < b < 1.0:
        raise DomainError(f"bandwidth must lie in (0, 1), got {b}")
    if not p >= 0:
        raise DomainError(f"p must be >= 0, got {p}")

    def integrand(S):
        rest = 1.0 - S.sum(axis=1)
        inside = (S.min(axis=1) >= b) & (rest >= b)
        out = np.zeros(len(S))
        if np.any(inside):
            logs = np.log(rest[inside]) + np.log(S[inside]).sum(axis=1)
            out[inside] = np.exp(-0.25 * p * logs)
        return out

    return integrate_mc(integrand, d, quad_points, seed)


class VarianceRow(NamedTuple):
    """Empirical variance of the estimator at ``s`` next to its leading-order value."""

    s: tuple
    empirical_var: float
    stderr: float
    theoretical_var: float

    @property
    def ratio(self):
        return self.empirical_var / self.theoretical_var


def variance_profile(f, s_grid, n, b, reps, seed=None):
    """Replicate variance of ``f_hat(s)`` on a grid of interior points.

    ``stderr`` of the variance comes from the fourth central moment.
    """
    if reps < 3:
        raise DomainError("variance_profile needs reps >= 3")
    S = as_points(s_grid, f.d)
    vals = np.empty((reps, len(S)))
    for rep in range(reps):
        sample = f.sample(n, make_rng(seed, n, rep, _TAG_VARIANCE))
        vals[rep] = DirichletKDE(sample, b).evaluate(S)
    fs = f(S)
    rows = []
    for j, s in enumerate(S):
        v = vals[:, j]
        centred = v - v.mean()
        var = float(np.sum(centred**2) / (reps - 1))
        m4 = float(np.mean(centred**4))
        se = math.sqrt(max(m4 - var**2, 0.0) / reps)
        rows.append(VarianceRow(tuple(s.tolist()), var, se, variance_approx(n, s, b, fs[j])))
    return rows


class BiasScaling(NamedTuple):
    """Sup-bias per bandwidth and its log-log fit (``None`` when the bias vanishes)."""

    b_grid: tuple
    sup_bias: tuple
    fit: RateFit | None


def _default_bias_grid(density, b):
    if isinstance(density, SpikyDensity):
        return spike_centers(density.spec)[0]
    step = min(math.sqrt(b), 0.05)
    axis = np.arange(step, 1.0, step)
    mesh = np.meshgrid(*([axis] * density.d), indexing="ij")
    S = np.column_stack([m.ravel() for m in mesh])
    return S[1.0 - S.sum(axis=1) >= step]


def bias_scaling_experiment(f, beta, b_grid, s_grid=None, mc_points=100_000, seed=None):
    """Sup over ``s_grid`` of ``|E f_hat(s) - f(s)|`` for each ``b``, with its log-log fit.

    For the spiky density the spike scale follows the bandwidth, so the
    density is rebuilt at each ``b`` from its spec. The linear density uses
    the exact bias formula. Without ``s_grid`` the spike centers (spiky
    density) or an interior tensor grid of spacing ``sqrt(b)`` are used.
    """
    b_grid = tuple(float(b) for b in b_grid)
    if any(b2 >= b1 for b1, b2 in zip(b_grid, b_grid[1:])):
        raise DomainError("b_grid must be decreasing")
    if isinstance(f, SpikyDensity) and f.spec.beta != beta:
        raise DomainError("beta does not match the spiky density spec")
    sups = []
    for i, b in enumerate(b_grid):
        density = f
        if isinstance(f, SpikyDensity):
            density = SpikyDensity(replace(f.spec, b=b))
        S = _default_bias_grid(density, b) if s_grid is None else as_points(s_grid, f.d)
        if isinstance(density, LinearDensity):
            bias = [abs(f3_exact_bias(s, b)) for s in S]
        elif isinstance(density, UniformDensity):
            bias = [abs(expected_estimate(density, s, b, mc_points, make_rng(seed, i, j)).value
                        - math.factorial(density.d)) for j, s in enumerate(S)]
        else:
            fs = density(S)
            bias = [abs(expected_estimate(density, s, b, mc_points, make_rng(seed, i, j)).value
                        - fs[j]) for j, s in enumerate(S)]
        sups.append(float(max(bias)))
    fit = None if max(sups) == 0.0 else fit_loglog(b_grid, sups)
    return BiasScaling(b_grid, tuple(sups), fit)


MINIMAX_N_GRID = tuple(256 * 2**k for k in range(7))


def preset(name, **overrides):
    """Ready-made experiment configurations.

    ``"minimax"``: uniform density, ``d = 1``, ``b_n = n**(-2/5)``.
    ``"nonminimax"``: linear density, ``d = 1``, oracle bandwidth over 15
    log-spaced values in ``[2e-3, 0.2]``. Both use ``p = 2``, 200 replicates
    and ``10**4`` quadrature points on ``n = 256, ..., 16384``.
    """
    base = {"n_grid": MINIMAX_N_GRID, "p": 2.0, "reps": 200, "quad_points": 10_000}
    if name == "minimax":
        base.update(density=UniformDensity(1), bandwidth=BandwidthSpec.rule(1.0, 2.0))
    elif name == "nonminimax":
        base.update(
            density=LinearDensity(1),
            bandwidth=OracleBandwidth.logspaced(2e-3, 0.2, 15, pilot_reps=25,
                                                pilot_quad_points=2500),
        )
    else:
        raise ConfigError(f"unknown preset {name!r}; expected minimax or nonminimax")
    base.update(overrides)
    return RiskExperimentConfig(**base)
