"""Command-line experiment runner.

Usage::

    circlelab run config.yaml
    circlelab denjoy --family sine_family --a 0.5 --omega tune --rho golden --depth 14
    circlelab schedule --beta 0.2 --delta 0.5

Exit codes: 0 success, 2 usage or precondition error, 3 an exact identity
failed beyond tolerance, 4 orbit or search budget exhausted.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import random
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import yaml

from . import __version__
from .circlemap import DEFAULT_ORBIT_BUDGET, CircleMapSpec, iterate_orbit, rotation_number, tune_parameter
from .conjugacy import conjugacy_report, exponent_schedule, orbit_density, predicted_regularity, rho_depth_for
from .crossratio import (
    Quad,
    check_multiplicativity,
    exact_relation_check,
    expansion_sweep,
    sweep_slope,
)
from .errors import CircleLabError, DomainError, ResourceError, VerificationError
from .numerics import PrecisionContext, to_decimal
from .renorm import (
    build_partition,
    denjoy_scan,
    e_n_sigma,
    exact_identities_check,
    m_ratio_check,
    mk_functions,
    schwarz_decay,
    schwarz_sums,
)
from .rotnum import (cf_expand, cf_from_quotients, diophantine_estimate, gap_sequence, golden_mean,
                     rho_from_quotients, silver_mean)

EXPERIMENTS = ("rotnum", "crossratio", "identities", "denjoy", "schwarz", "conjugacy", "schedule")
EXIT_USAGE, EXIT_VERIFY, EXIT_RESOURCE = 2, 3, 4
NUM_BITS = 64  # digits written to reports


class UsageError(CircleLabError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    map: dict = field(default_factory=dict)
    rho_target: object = "golden"
    depth: int = 10
    levels: list | None = None
    precision_bits: int = 256
    samples: int = 64
    seed: int = 0
    tune_tol: str = "1e-9"
    theorem: dict | None = None
    out: str = "results"
    format: str = "csv"
    budget: int = DEFAULT_ORBIT_BUDGET

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def level_range(self) -> list:
        if self.levels:
            lo, hi = self.levels
            return list(range(int(lo), int(hi) + 1))
        return list(range(1, self.depth + 1))


_INT_FIELDS = ("depth", "precision_bits", "samples", "seed", "budget")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every field before any computation runs."""
    if cfg.experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {cfg.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    for name in _INT_FIELDS:
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool):
            raise UsageError(f"{name} must be an integer, got {v!r}")
    if cfg.precision_bits < 64:
        raise UsageError("precision_bits must be >= 64")
    if cfg.depth < 1 or cfg.samples < 1:
        raise UsageError("depth and samples must be positive")
    if cfg.format not in ("csv", "json"):
        raise UsageError(f"format must be csv or json, got {cfg.format!r}")
    if cfg.levels is not None and (len(cfg.levels) != 2 or int(cfg.levels[0]) > int(cfg.levels[1])):
        raise UsageError("levels must be [first, last]")
    for key, val in (cfg.map or {}).items():
        if isinstance(val, float):
            raise UsageError(f"map.{key}: write reals as decimal strings, not floats")
    if cfg.theorem is not None:
        b, d = cfg.theorem.get("beta"), cfg.theorem.get("delta")
        if b is None or d is None:
            raise UsageError("theorem preset needs beta and delta")
        b, d = Fraction(str(b)), Fraction(str(d))
        if not 0 < b < d < 1:
            raise UsageError(f"theorem preset violates the hypothesis 0<β<δ<1 (beta={b}, delta={d})")
        if cfg.theorem.get("r") is not None:
            try:
                predicted_regularity(str(cfg.theorem["r"]), str(d))
            except CircleLabError as exc:
                raise UsageError(f"theorem.r: {exc}") from exc
    if cfg.experiment != "schedule":
        _map_spec(cfg, PrecisionContext(cfg.precision_bits), dry=True)
    else:
        src = cfg.theorem or cfg.map
        if "beta" not in src or "delta" not in src:
            raise UsageError("schedule needs beta and delta")
    return cfg


def _rho(target, ctx):
    if isinstance(target, list):
        # a prefix of an irrational: the tail after the listed quotients is golden
        ks = [int(k) for k in target]
        if not ks or min(ks) < 1:
            raise UsageError("rho_target quotients must be positive integers")
        return cf_from_quotients(ks, ctx, rho=rho_from_quotients(ks + [1] * 80, ctx))
    t = str(target).strip().lower()
    if t == "golden":
        return cf_expand(golden_mean(ctx), 60, ctx)
    if t == "silver":
        return cf_expand(silver_mean(ctx), 60, ctx)
    return cf_expand(ctx.mpf(str(target)), 60, ctx)


def _map_spec(cfg: ExperimentConfig, ctx, dry=False):
    m = dict(cfg.map or {})
    fam = m.pop("family", "sine_family")
    omega = m.pop("omega", "tune" if fam != "rigid_rotation" else None)
    params = {k: str(v) for k, v in m.items()}
    try:
        if fam == "rigid_rotation":
            om = _rho(cfg.rho_target if omega in (None, "tune") else omega, ctx).rho
            return CircleMapSpec.rigid_rotation(om)
        if fam == "sine_family":
            base = CircleMapSpec.sine_family("0", params.get("a", "0.5"))
        elif fam == "weierstrass_family":
            beta = params.get("beta", str((cfg.theorem or {}).get("beta", "0.5")))
            base = CircleMapSpec.weierstrass_family("0", params.get("a"), beta, int(params.get("lam", 2)),
                                                    int(params.get("K", 24)))
        else:
            raise UsageError(f"unknown map family {fam!r}")
    except CircleLabError as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(str(exc)) from exc
    if dry:
        return base
    if omega == "tune":
        target = _rho(cfg.rho_target, ctx)
        om = tune_parameter(base, target, cfg.tune_tol, ctx, budget=cfg.budget)
        return base.with_omega(om)
    return base.with_omega(str(omega))


# ---- output ---------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(v):
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    if isinstance(v, float):
        return v
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, (list, tuple)):
        return [_fmt(u) for u in v]
    if isinstance(v, dict):
        return {k: _fmt(u) for k, u in v.items()}
    return to_decimal(v, NUM_BITS)


def _provenance(cfg, cf_prefix):
    return {"config_hash": cfg.hash, "precision_bits": cfg.precision_bits,
            "rho_cf_prefix": list(cf_prefix), "experiment": cfg.experiment, "version": __version__}


def emit(cfg: ExperimentConfig, summary: dict, rows: list[dict] | None, cf_prefix, plot=None) -> list[Path]:
    """Write <experiment>.json and, for csv format, <experiment>.csv.

    The first line of the CSV, and the second of the JSON, carries the
    timestamp; everything else is a function of the config alone.
    """
    out = Path(cfg.out)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    prov = _provenance(cfg, cf_prefix)
    body = {k: _fmt(v) for k, v in summary.items()}
    if rows is not None and cfg.format == "json":
        body["rows"] = [{k: _fmt(v) for k, v in r.items()} for r in rows]
    doc = {"generated": stamp}
    doc.update({k: prov[k] for k in sorted(prov)})
    doc.update({k: body[k] for k in sorted(body)})
    written = []
    p = out / f"{cfg.experiment}.json"
    _atomic_write(p, json.dumps(doc, indent=1) + "\n")
    written.append(p)
    if rows is not None and cfg.format == "csv":
        cols = list(rows[0].keys()) if rows else []
        lines = [f"# generated {stamp}",
                 f"# config_hash {prov['config_hash']} precision_bits {cfg.precision_bits} "
                 f"rho_cf_prefix {' '.join(map(str, cf_prefix))}",
                 ",".join(cols)]
        for r in rows:
            lines.append(",".join("" if r[c] is None else str(_fmt(r[c])) for c in cols))
        p = out / f"{cfg.experiment}.csv"
        _atomic_write(p, "\n".join(lines) + "\n")
        written.append(p)
    if plot is not None:
        xlabel, ylabel, pts = plot
        dat = "\n".join(f"{float(x):.17g} {float(y):.17g}" for x, y in pts) + "\n"
        _atomic_write(out / f"{cfg.experiment}_plot.dat", dat)
        _atomic_write(out / f"{cfg.experiment}_plot.txt",
                      f"two columns: {xlabel} {ylabel}\nconfig_hash {prov['config_hash']}\n")
    return written


# ---- experiments ----------------------------------------------------------

def _realized(spec, cfg, ctx, depth=None):
    depth = depth or cfg.depth
    if spec.is_affine:
        return cf_expand(ctx.mpf(spec.param("omega")), depth + 2, ctx)
    rho, cf = rotation_number(spec, ctx, depth + 2, budget=cfg.budget)
    return cf


def run_rotnum(cfg, ctx):
    spec = _map_spec(cfg, ctx)
    cf = _realized(spec, cfg, ctx)
    gaps = gap_sequence(cf, ctx)
    rows = [{"n": n, "k_n": cf.quotients[n - 1] if n >= 1 else "", "p_n": cf.p(n), "q_n": cf.q(n),
             "delta_n": gaps.delta(n)} for n in range(0, cf.depth + 1)]
    summary = {"map": spec.describe(cfg.precision_bits), "rho": cf.rho}
    if cf.depth >= 4:
        summary["delta_hat"] = diophantine_estimate(gaps).delta_hat
    return summary, rows, cf.quotients, None


def run_crossratio(cfg, ctx):
    spec = _map_spec(cfg, ctx)
    f = spec.bind(ctx)
    rng = random.Random(cfg.seed)
    bases = [ctx.mpf(f"{rng.random():.12f}") for _ in range(max(1, min(cfg.samples, 8)))]
    summary = {"map": spec.describe(cfg.precision_bits)}
    rows = []
    plot_pts = []
    for kind, theta in (("dr", "mid"), ("theta", "mid"), ("dist", "x1"), ("dist", "mid")):
        res = expansion_sweep(f, kind, bases, theta=theta)
        label = kind if kind != "dist" else f"dist_theta_{theta}"
        try:
            summary[f"slope_{label}"] = float(sweep_slope(res, ctx).slope)
        except DomainError:
            summary[f"slope_{label}"] = None
        for r in res:
            rows.append({"kind": label, "delta": r.quad_scale, "actual": r.actual, "predicted": r.predicted,
                         "residual": r.residual})
            if kind == "dr" and r.residual != 0:
                plot_pts.append((r.quad_scale, abs(r.residual)))
    return summary, rows, [], ("delta", "abs_residual_dr", plot_pts) if plot_pts else None


def run_identities(cfg, ctx):
    spec = _map_spec(cfg, ctx)
    cf = _realized(spec, cfg, ctx, cfg.level_range[-1] + 1)
    levels = [n for n in cfg.level_range if n >= 2]
    if not levels:
        raise UsageError("identities need levels >= 2")
    top = levels[-1] + 1
    orbit = iterate_orbit(spec, 0, cf.q(top) + cf.q(top - 1) + 1, ctx, cfg.budget)
    dens = orbit_density(orbit)
    parts = {n: build_partition(orbit, cf, n) for n in range(levels[0] - 1, top + 1)}
    rng = random.Random(cfg.seed)
    rows, failures = [], []
    f = spec.bind(ctx)
    for n in levels:
        ids = exact_identities_check([parts[n - 1], parts[n], parts[n + 1]])
        mk = mk_functions(parts[n], 8)
        ts = [s for s, _ in mk.M_samples[1:-1]]
        mr, mt = m_ratio_check(parts[n], ts[0], ts[-1])
        ss = schwarz_sums(parts[n], dens)
        row = {"n": n, "q_n": cf.q(n), "observ1_res": ids.observ1, "observ2_res": ids.observ2,
               "observ3_res": ids.observ3, "mk_observ1_res": mk.observ1_residual, "m_ratio_res": mr,
               "p_bp_res": ss.two_path_residual}
        checks = list(zip(("observ1", "observ2", "observ3"), (ids.observ1, ids.observ2, ids.observ3),
                          ids.tolerances))
        checks += [("mk_observ1", mk.observ1_residual, mk.observ1_tolerance), ("m_ratio", mr, mt),
                   ("p_bp", ss.two_path_residual, ss.tolerance)]
        row["passed"] = all(r <= t for _, r, t in checks)
        failures += [f"{name}@n={n}" for name, r, t in checks if not r <= t]
        rows.append(row)
    worst_rel = worst_mult = ctx.mpf(0)
    with ctx.local():
        for _ in range(cfg.samples):
            x1, x2, x3, x4 = (ctx.mpf(f"{rng.random():.15f}") for _ in range(4))
            if x2 == x3:
                continue
            r, t = exact_relation_check(x1, x2, x3, f)
            worst_rel = max(worst_rel, r)
            if not r <= t:
                failures.append("exact_relation")
            r1, r2, t1, t2 = check_multiplicativity(Quad(x1, x2, x3, x4), f, f)
            worst_mult = max(worst_mult, r1, r2)
            if not (r1 <= t1 and r2 <= t2):
                failures.append("multiplicativity")
    summary = {"map": spec.describe(cfg.precision_bits), "levels": levels, "random_instances": cfg.samples,
               "exact_relation_max": worst_rel, "multiplicativity_max": worst_mult,
               "failures": sorted(set(failures))}
    return summary, rows, cf.quotients[:top], None


def run_denjoy(cfg, ctx):
    spec = _map_spec(cfg, ctx)
    n_max = cfg.level_range[-1]
    cf = _realized(spec, cfg, ctx, n_max)
    fit_from = cfg.level_range[0] if cfg.levels else 3
    rep = denjoy_scan(spec, cf, n_max, cfg.samples, ctx, fit_from=fit_from, budget=cfg.budget)
    gaps = gap_sequence(cf, ctx)
    eps = rep.eps_series(1)
    rows = [{"n": lv.n, "q_n": lv.q, "delta_n": lv.delta, "sup_dev": lv.sup_dev, "max_len": lv.max_len,
             "E_n1": e_n_sigma(gaps, lv.n, 1, ctx), "eps_n1": eps[lv.n]} for lv in rep.per_level]
    summary = {"map": spec.describe(cfg.precision_bits), "nu": "inf" if rep.rigid else rep.nu,
               "fit_levels": list(rep.fit_levels)}
    if cfg.theorem is not None:
        summary["theorem"] = {k: str(v) for k, v in cfg.theorem.items()}
    plot = None
    if rep.fitted_nu is not None:
        plot = ("log10_delta_n", "log10_sup_dev", [(x, y) for x, y in rep.fitted_nu.points])
    return summary, rows, cf.quotients[:n_max], plot


def run_schwarz(cfg, ctx):
    spec = _map_spec(cfg, ctx)
    levels = [n for n in cfg.level_range if n >= 1]
    top = levels[-1]
    cf = _realized(spec, cfg, ctx, top)
    orbit = iterate_orbit(spec, 0, max(cf.q(top) + cf.q(top - 1) + 1, cfg.samples), ctx, cfg.budget)
    dens = orbit_density(orbit)
    sums = [schwarz_sums(build_partition(orbit, cf, n), dens) for n in levels]
    gaps = gap_sequence(cf, ctx)
    rows = [{"n": s.level, "delta_prev": gaps.delta(s.level - 1), "p_sum": s.p_sum, "pbar_sum": s.pbar_sum,
             "xi_hat_sum": s.xi_hat_sum, "two_path_res": s.two_path_residual} for s in sums]
    summary = {"map": spec.describe(cfg.precision_bits), "density_points": orbit.length}
    nonzero = [s for s in sums if s.p_sum != 0]
    if len(nonzero) >= 2:
        summary["decay_exponent"] = float(schwarz_decay(nonzero, gaps, ctx).slope)
    else:
        summary["decay_exponent"] = None
    failures = [s.level for s in sums if not s.two_path_residual <= s.tolerance]
    summary["failures"] = failures
    return summary, rows, cf.quotients[:top], None


CONJ_MIN_POINTS = 10_000


def run_conjugacy(cfg, ctx):
    spec = _map_spec(cfg, ctx)
    # two decades of scales above 8 median gaps need about 10^4 points
    npts = max(cfg.samples, CONJ_MIN_POINTS)
    omega = (cfg.map or {}).get("omega", "tune")
    known = _rho(cfg.rho_target, ctx).quotients if omega == "tune" and spec.family != "rigid_rotation" else ()
    depth = max(cfg.depth, rho_depth_for(npts, known))
    if spec.is_affine:
        rho = ctx.mpf(spec.param("omega"))
        cf = cf_expand(rho, depth, ctx)
    else:
        rho, cf = rotation_number(spec, ctx, depth, budget=cfg.budget)
    orbit = iterate_orbit(spec, 0, npts, ctx, cfg.budget)
    th = cfg.theorem or {}
    rep = conjugacy_report(spec, orbit, rho, cf.quotients, th.get("r"), th.get("delta"))
    rep["orbit_points"] = npts
    rep["rho_depth"] = depth
    return rep, None, cf.quotients, None


def run_schedule(cfg, ctx):
    src = cfg.theorem or cfg.map
    sch = exponent_schedule(str(src["beta"]), str(src["delta"]))
    return sch.as_json(), None, [], None


RUNNERS = {"rotnum": run_rotnum, "crossratio": run_crossratio, "identities": run_identities,
           "denjoy": run_denjoy, "schwarz": run_schwarz, "conjugacy": run_conjugacy, "schedule": run_schedule}


def run(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Validate, execute and write reports; returns (exit status, summary)."""
    try:
        validate(cfg)
        ctx = PrecisionContext(cfg.precision_bits)
        summary, rows, cf_prefix, plot = RUNNERS[cfg.experiment](cfg, ctx)
        emit(cfg, summary, rows, cf_prefix, plot)
        if summary.get("failures"):
            raise VerificationError(f"identity checks failed: {summary['failures']}")
        return 0, summary
    except (UsageError, DomainError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE, {"error": str(exc)}
    except VerificationError as exc:
        print(f"verification error: {exc}", file=sys.stderr)
        return EXIT_VERIFY, {"error": str(exc)}
    except (ResourceError, MemoryError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE, {"error": str(exc)}
    except CircleLabError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_USAGE, {"error": str(exc)}


def load_config(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise UsageError("config file must hold a mapping")
    return data


def _from_dict(data: dict) -> ExperimentConfig:
    known = set(ExperimentConfig.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise UsageError(f"unknown config keys: {', '.join(sorted(extra))}")
    if "experiment" not in data:
        raise UsageError("config lacks 'experiment'")
    return ExperimentConfig(**data)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="circlelab", description="circle diffeomorphism experiments")
    ap.add_argument("--version", action="version", version=f"circlelab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("config")
    _common(r)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"{name} experiment")
        p.add_argument("--config", help="YAML config; flags override its values")
        p.add_argument("--family", choices=("rigid_rotation", "sine_family", "weierstrass_family"))
        p.add_argument("--a", help="amplitude (decimal string)")
        p.add_argument("--omega", help="decimal string, 'golden', 'silver' or 'tune'")
        p.add_argument("--rho", help="target rotation number: golden, silver, decimal or k1,k2,...")
        p.add_argument("--beta")
        p.add_argument("--delta")
        p.add_argument("--r", help="smoothness r for the theorem preset")
        p.add_argument("--levels", help="first,last")
        p.add_argument("--tune-tol")
        p.add_argument("--theorem", action="store_true", help="theorem-regime preset (needs beta < delta)")
        _common(p)
    return ap


def _common(p):
    p.add_argument("--precision", type=int, help="mantissa bits")
    p.add_argument("--depth", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"))


def config_from_args(args) -> ExperimentConfig:
    data = {}
    path = getattr(args, "config", None)
    if path:
        data = load_config(path)
    if args.command != "run":
        data["experiment"] = args.command
        m = dict(data.get("map") or {})
        for key in ("family", "a", "omega", "beta"):
            v = getattr(args, key, None)
            if key == "beta" and args.command == "schedule":
                continue
            if v is not None:
                m[key] = v
        if m:
            data["map"] = m
        if args.rho is not None:
            data["rho_target"] = [int(k) for k in args.rho.split(",")] if "," in args.rho else args.rho
        if args.levels:
            data["levels"] = [int(v) for v in args.levels.split(",")]
        if args.tune_tol:
            data["tune_tol"] = args.tune_tol
        if args.theorem or args.command == "schedule":
            th = dict(data.get("theorem") or {})
            for key in ("beta", "delta", "r"):
                v = getattr(args, key, None)
                if v is not None:
                    th[key] = v
            data["theorem"] = th
            if args.command == "schedule":
                data.get("map", {}).pop("beta", None)
    for flag, key in (("precision", "precision_bits"), ("depth", "depth"), ("samples", "samples"),
                      ("seed", "seed"), ("out", "out"), ("format", "format")):
        v = getattr(args, flag, None)
        if v is not None:
            data[key] = v
    return _from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (UsageError, TypeError, ValueError, OSError, yaml.YAMLError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    status, summary = run(cfg)
    if status == 0:
        print(json.dumps({k: _fmt(v) for k, v in summary.items()}, default=str, sort_keys=True))
    return status


if __name__ == "__main__":
    sys.exit(main())
