"""Command-line interface.

Every command reads optional defaults from a flat ``key = value`` config
file (``--config``); flags given on the command line win. The default seed
comes from ``DKDE_SEED`` when neither source sets one. Outputs start with a
one-line ``#`` JSON header (CSV) or a ``provenance`` member (JSON) holding
the resolved configuration, so every file records how it was made.

Exit codes: 0 success, 2 input or configuration error, 3 domain error,
4 numerical failure.
"""

import argparse
import configparser
import csv
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .densities import SpikyDensitySpec, UniformDensity, make_density, spike_centers
from .errors import (
    ConfigError,
    DegenerateFitError,
    DomainError,
    NumericalError,
    SpecValidationError,
)
from .kernel import (
    BandwidthSpec,
    DirichletKDE,
    DirichletParams,
    estimator_params,
    kernel_log_density,
)
from .risk_lab import (
    OracleBandwidth,
    RiskExperimentConfig,
    RiskTable,
    fit_rate,
    preset,
    risk_sweep,
)
from .simplex import as_points

EXIT_OK, EXIT_INPUT, EXIT_DOMAIN, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "DKDE_SEED"


class InputError(Exception):
    """Malformed input file or configuration; maps to exit code 2."""


# ---------------------------------------------------------------- helpers


def _read_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config file: {exc}") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise InputError(f"malformed config file {path}: {exc}") from None
    return {k.replace("-", "_"): v for k, v in parser["config"].items()}


class _Resolver:
    """Looks up a setting: command-line flag, then config file, then default."""

    def __init__(self, args):
        self.args = args
        self.file = _read_config(args.config)
        known = set(vars(args))
        unknown = sorted(set(self.file) - known)
        self.problems = [f"unknown config key {k!r}" for k in unknown]
        self.resolved = {}

    def get(self, key, kind=str, default=None):
        value = getattr(self.args, key, None)
        if value is None and key in self.file:
            value = self.file[key]
        if value is None:
            value = default
        if isinstance(value, str) and kind is not str:
            try:
                value = kind(value)
            except (TypeError, ValueError):
                self.problems.append(f"{key}: cannot parse {value!r}")
                value = None
        if value is not None:
            self.resolved[key] = value
        return value

    def check(self):
        if self.problems:
            raise ConfigError(self.problems)


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(" ", "").split(",") if v]


def _seed(res):
    env = os.environ.get(SEED_ENV)
    default = 0
    if env is not None:
        try:
            default = int(env)
        except ValueError:
            res.problems.append(f"{SEED_ENV} must be an integer, got {env!r}")
    return res.get("seed", int, default)


def read_points_csv(path, d=None):
    """Headerless CSV of points, one per row; errors name the offending row."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    points = []
    for i, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            values = [float(c) for c in row]
        except ValueError:
            raise InputError(f"{path}: row {i} is not numeric: {row}") from None
        if not all(np.isfinite(values)):
            raise InputError(f"{path}: row {i} holds a non-finite value")
        if d is None:
            d = len(values)
        if len(values) != d:
            raise InputError(f"{path}: row {i} has {len(values)} columns, expected {d}")
        points.append(values)
    if not points:
        raise InputError(f"{path}: no data rows")
    X = np.array(points)
    for i, x in enumerate(X, start=1):
        if x.min() < -1e-12 or x.sum() > 1.0 + 1e-12:
            raise DomainError(f"{path}: row {i} = {x.tolist()} is not in the simplex")
    return as_points(X, d)


def simplex_grid(d, k):
    """Tensor grid with ``k`` points per axis on ``[0, 1]``, restricted to the simplex."""
    if k < 2:
        raise ConfigError("grid needs at least 2 points per axis")
    axis = np.linspace(0.0, 1.0, k)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    S = np.column_stack([m.ravel() for m in mesh])
    return S[S.sum(axis=1) <= 1.0 + 1e-12]


def _header(schema, command, config):
    return {"schema": schema, "version": 1, "command": command,
            "package_version": __version__, "config": config}


def _write_table(out, fmt, header, columns, rows):
    if fmt == "json":
        payload = {"provenance": header,
                   "rows": [dict(zip(columns, r)) for r in rows]}
        out.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return
    out.write("# " + json.dumps(header, sort_keys=True) + "\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _emit(args, text):
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _density_from(res):
    before = len(res.problems)
    name = res.get("density", str, "f0")
    d = res.get("d", int, 1)
    beta = res.get("beta", float)
    L = res.get("L", float, 1.0)
    spike_b = res.get("spike_b", float)
    if len(res.problems) > before:
        return None
    if name == "fbeta" and (beta is None or spike_b is None):
        res.problems.append("density fbeta needs beta and spike_b")
        return None
    try:
        return make_density(name, d, beta=beta, L=L, spike_b=spike_b)
    except SpecValidationError as exc:
        res.problems.extend(exc.violations)
    except DomainError as exc:
        res.problems.append(str(exc))
    return None


def _eval_points(res, d):
    path = res.get("points", str)
    grid = res.get("grid", int, 101 if path is None else None)
    res.check()
    if path is not None:
        return read_points_csv(path, d)
    return simplex_grid(d, grid)


# ---------------------------------------------------------------- commands


def cmd_estimate(args):
    res = _Resolver(args)
    sample_path = res.get("sample", str)
    if sample_path is None:
        raise ConfigError("estimate needs --sample")
    X = read_points_csv(sample_path)
    n, d = X.shape
    b = res.get("b", float)
    c = res.get("c", float)
    rule_beta = res.get("rule_beta", float)
    fmt = res.get("format", str, "csv")
    res.check()
    if b is None:
        if c is None or rule_beta is None:
            raise ConfigError("give --b, or both --c and --rule-beta")
        b = BandwidthSpec.rule(c, rule_beta).at(n, d)
    else:
        b = BandwidthSpec.fixed(b).at(n, d)
    S = _eval_points(res, d)
    values = DirichletKDE(X, b).evaluate(S)
    config = dict(res.resolved, n=n, d=d, b_resolved=b)
    columns = [f"s{k + 1}" for k in range(d)] + ["value"]
    rows = [list(s) + [v] for s, v in zip(S.tolist(), values.tolist())]
    buf = io.StringIO()
    _write_table(buf, fmt, _header("estimate", "estimate", config), columns, rows)
    _emit(args, buf.getvalue())


def _sweep_config(res):
    problems = res.problems
    name = res.get("preset", str)
    overrides = {"seed": _seed(res), "threads": res.get("threads", int, 1)}
    for key, kind in (("p", float), ("reps", int), ("quad_points", int)):
        v = res.get(key, kind)
        if v is not None:
            overrides[key] = v
    n_grid = res.get("n_grid", _int_list)
    if n_grid is not None:
        overrides["n_grid"] = tuple(n_grid)
    explicit_density = any(getattr(res.args, k) is not None or k in res.file
                           for k in ("density", "d", "beta", "L", "spike_b"))
    if name is None or explicit_density:
        density = _density_from(res)
        if density is not None:
            overrides["density"] = density
    b = res.get("b", float)
    c = res.get("c", float)
    rule_beta = res.get("rule_beta", float)
    oracle = res.get("oracle_grid", _float_list)
    pilot_reps = res.get("pilot_reps", int, 25)
    pilot_quad = res.get("pilot_quad_points", int)
    chosen = [x is not None for x in (b, c if c is not None else rule_beta, oracle)]
    try:
        if sum(chosen) > 1:
            problems.append("choose one of b, c/rule_beta, oracle_grid")
        elif b is not None:
            overrides["bandwidth"] = BandwidthSpec.fixed(b)
        elif c is not None or rule_beta is not None:
            if c is None or rule_beta is None:
                problems.append("the bandwidth rule needs both c and rule_beta")
            else:
                overrides["bandwidth"] = BandwidthSpec.rule(c, rule_beta)
        elif oracle is not None:
            if len(oracle) != 3:
                problems.append("oracle_grid takes lo,hi,num")
            else:
                overrides["bandwidth"] = OracleBandwidth.logspaced(
                    oracle[0], oracle[1], int(oracle[2]), pilot_reps=pilot_reps,
                    pilot_quad_points=pilot_quad)
    except DomainError as exc:
        problems.append(str(exc))
    config = None
    trial = dict(overrides)
    if name is None:
        # stand-ins let the remaining fields be validated in the same pass
        stand_ins = {"density": UniformDensity(1), "n_grid": (1,),
                     "bandwidth": BandwidthSpec.fixed(0.5)}
        for key, value in stand_ins.items():
            if key not in overrides:
                problems.append(f"risk-sweep without a preset needs a valid {key}")
                trial[key] = value
    try:
        if name is not None:
            config = preset(name, **trial)
        else:
            config = RiskExperimentConfig(**trial)
    except ConfigError as exc:
        problems.extend(exc.violations)
    res.check()
    return config


def cmd_risk_sweep(args):
    res = _Resolver(args)
    config = _sweep_config(res)
    fmt = res.get("format", str, "csv")
    table = risk_sweep(config)
    _emit(args, table.to_json() if fmt == "json" else table.to_csv())


def cmd_rate_fit(args):
    res = _Resolver(args)
    path = res.get("input", str)
    max_rel = res.get("max_rel_stderr", float, 0.2)
    res.check()
    if path is None:
        raise ConfigError("rate-fit needs --input")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    try:
        table = RiskTable.from_json(text) if text.lstrip().startswith("{") else RiskTable.from_csv(text)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: not a risk table ({exc})") from None
    fit = fit_rate(table, max_rel_stderr=max_rel)
    payload = {"provenance": _header("rate_fit", "rate-fit", {
        "input": path, "max_rel_stderr": max_rel, "table_config": table.config})}
    payload.update(fit.to_dict())
    _emit(args, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_density_eval(args):
    res = _Resolver(args)
    density = _density_from(res)
    fmt = res.get("format", str, "csv")
    res.check()
    S = _eval_points(res, density.d)
    values = density(S)
    columns = [f"s{k + 1}" for k in range(density.d)] + ["value"]
    rows = [list(s) + [v] for s, v in zip(S.tolist(), values.tolist())]
    buf = io.StringIO()
    _write_table(buf, fmt, _header("density_eval", "density-eval", res.resolved), columns, rows)
    _emit(args, buf.getvalue())


def cmd_kernel_eval(args):
    res = _Resolver(args)
    u = res.get("u", _float_list)
    v = res.get("v", float)
    center = res.get("center", _float_list)
    b = res.get("b", float)
    fmt = res.get("format", str, "csv")
    res.check()
    if u is not None and v is not None and center is None:
        params = DirichletParams(tuple(u), v)
    elif center is not None and b is not None and u is None and v is None:
        params = estimator_params(center, b)
    else:
        raise ConfigError("give either --u and --v, or --center and --b")
    S = _eval_points(res, params.d)
    logk = np.atleast_1d(kernel_log_density(params, S))
    columns = [f"s{k + 1}" for k in range(params.d)] + ["log_density", "density"]
    rows = [list(s) + [lk, float(np.exp(lk))] for s, lk in zip(S.tolist(), logk.tolist())]
    config = dict(res.resolved, params={"u": list(params.u), "v": params.v})
    buf = io.StringIO()
    _write_table(buf, fmt, _header("kernel_eval", "kernel-eval", config), columns, rows)
    _emit(args, buf.getvalue())


def cmd_spike_export(args):
    res = _Resolver(args)
    d = res.get("d", int, 1)
    beta = res.get("beta", float, 1.0)
    L = res.get("L", float, 1.0)
    b = res.get("b", float)
    fmt = res.get("format", str, "json")
    res.check()
    if b is None:
        raise ConfigError("spike-export needs --b")
    spec = SpikyDensitySpec(d, beta, L, b)
    header = _header("spike_export", "spike-export", res.resolved)
    if fmt == "json":
        payload = {"provenance": header, **spec.to_dict()}
        _emit(args, json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return
    centers, signs = spike_centers(spec)
    columns = [f"t{k + 1}" for k in range(d)] + ["sign"]
    rows = [list(t) + [int(sg)] for t, sg in zip(centers.tolist(), signs.tolist())]
    buf = io.StringIO()
    _write_table(buf, "csv", header, columns, rows)
    _emit(args, buf.getvalue())


# ---------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dirichlet-kde",
        description="Dirichlet kernel density estimation on the simplex.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt_default):
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.add_argument("--output", "-o", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"),
                       help=f"output format (default {fmt_default})")

    def points(p):
        p.add_argument("--points", help="headerless CSV of evaluation points")
        p.add_argument("--grid", type=int, help="points per axis of a tensor grid (default 101)")

    def density(p):
        p.add_argument("--density", choices=("f0", "f3", "fbeta"))
        p.add_argument("--d", type=int)
        p.add_argument("--beta", type=float)
        p.add_argument("--L", type=float)
        p.add_argument("--spike-b", dest="spike_b", type=float)

    p = sub.add_parser("estimate", help="evaluate the estimator from a sample file")
    common(p, "csv")
    points(p)
    p.add_argument("--sample", help="headerless CSV sample, one point per row")
    p.add_argument("--b", type=float, help="fixed bandwidth")
    p.add_argument("--c", type=float, help="rule constant in c * n**(-2/(d + 2 beta))")
    p.add_argument("--rule-beta", dest="rule_beta", type=float)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("risk-sweep", help="Monte Carlo L^p risk over a grid of n")
    common(p, "csv")
    density(p)
    p.add_argument("--preset", choices=("minimax", "nonminimax"))
    p.add_argument("--p", type=float)
    p.add_argument("--n-grid", dest="n_grid", help="comma-separated sample sizes")
    p.add_argument("--b", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--rule-beta", dest="rule_beta", type=float)
    p.add_argument("--oracle-grid", dest="oracle_grid", help="lo,hi,num of log-spaced bandwidths")
    p.add_argument("--pilot-reps", dest="pilot_reps", type=int)
    p.add_argument("--pilot-quad-points", dest="pilot_quad_points", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--quad-points", dest="quad_points", type=int)
    p.add_argument("--seed", type=int, help=f"master seed (default ${SEED_ENV} or 0)")
    p.add_argument("--threads", type=int, help="worker threads for replicates")
    p.set_defaults(func=cmd_risk_sweep)

    p = sub.add_parser("rate-fit", help="fit the log-log slope of a risk table")
    common(p, "json")
    p.add_argument("--input", help="risk table (CSV or JSON)")
    p.add_argument("--max-rel-stderr", dest="max_rel_stderr", type=float)
    p.set_defaults(func=cmd_rate_fit)

    p = sub.add_parser("density-eval", help="evaluate f0, f3 or fbeta")
    common(p, "csv")
    density(p)
    points(p)
    p.set_defaults(func=cmd_density_eval)

    p = sub.add_parser("kernel-eval", help="evaluate a Dirichlet kernel")
    common(p, "csv")
    points(p)
    p.add_argument("--u", help="comma-separated shapes u_1..u_d")
    p.add_argument("--v", type=float)
    p.add_argument("--center", help="estimator centre s (with --b)")
    p.add_argument("--b", type=float)
    p.set_defaults(func=cmd_kernel_eval)

    p = sub.add_parser("spike-export", help="spike centres and signs of fbeta")
    common(p, "json")
    p.add_argument("--d", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--b", type=float)
    p.set_defaults(func=cmd_spike_export)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (InputError, ConfigError, SpecValidationError, DegenerateFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
