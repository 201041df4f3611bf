"""Batch command-line front-end.

Every run reads a flat, line-oriented ``key = value`` config (repeated keys
form lists), writes its artifacts into ``--out`` and drops a ``manifest.json``
holding the resolved config, the seed, library versions, and wall time.
Passing a manifest as ``--config`` re-runs the experiment it records; all
payload files reproduce byte for byte (only the manifest's wall time moves).

Subcommands::

    action         evaluate the action along a reference path     -> action.json
    el-solve       Euler-Lagrange boundary value solve            -> path.csv, report.json
    minimize       direct action minimization                     -> path.csv, report.json
    multistart     ranked stationary candidates                   -> path_XXX.csv, ranking.json
    simulate       particle-ensemble statistics                   -> stats.csv
    tube           tube-probability estimate                      -> tube.csv
    ratio          two-path tube-ratio table                      -> ratio.csv
    paper-example  end-to-end double-well mean-field showcase     -> several of the above

Exit codes: 0 success, 2 config error, 3 solver non-convergence (artifacts
are still written), 1 anything else.  Failures leave a machine-readable
``error.json`` in the output directory.
"""

import argparse
import json
import os
import sys
import time

import numpy as np
import scipy

from . import __version__
from .action import om_action
from .drift import DistributionFree, LinearMeanField, PolySeparable1D, double_well_mean_field, mean_drift, ornstein_uhlenbeck, zero_drift
from .errors import ConfigError, NonConvergence, OmpathError
from .paths import NormKind, linear_path, path_from_poly, path_to_csv, read_csv
from .simulator import SimConfig, ensemble_stats, estimate_om_ratio, estimate_tube_probability, simulate_ensemble
from .variational import BVProblem, minimize_action, solve_el_bvp, solve_multistart
from ._poly import Monomials

LOCKFILE = ".ompath.lock"
MANIFEST = "manifest.json"


# -- config parsing ------------------------------------------------------------------


def parse_config_text(text):
    """Parse ``key = value`` lines into an ordered dict of value lists."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value' on line {lineno}: {raw!r}", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"empty key on line {lineno}", line=lineno)
        cfg.setdefault(key, []).append(value)
    return cfg


def serialize_config(cfg):
    lines = []
    for key, values in cfg.items():
        for value in values:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path):
    """Load a config file; a JSON manifest is unwrapped to its embedded config."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}", field="config")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        try:
            manifest = json.loads(text)
            cfg = {str(k): [str(v) for v in vals] for k, vals in manifest["config"].items()}
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"not a valid manifest: {exc}", field="config") from exc
        return cfg
    return parse_config_text(text)


class Config:
    """Typed accessors over the raw dict of value lists."""

    def __init__(self, raw, base_dir="."):
        self.raw = raw
        self.base_dir = base_dir

    def has(self, key):
        return key in self.raw

    def _one(self, key, default=None, required=False):
        vals = self.raw.get(key)
        if not vals:
            if required:
                raise ConfigError(f"missing required key {key!r}", field=key)
            return default
        if len(vals) > 1:
            raise ConfigError(f"key {key!r} given {len(vals)} times, expected once", field=key)
        return vals[0]

    def get_str(self, key, default=None, required=False, choices=None):
        val = self._one(key, default, required)
        if val is not None and choices is not None and val not in choices:
            raise ConfigError(f"{key!r} must be one of {sorted(choices)}, got {val!r}", field=key)
        return val

    def get_int(self, key, default=None, required=False):
        val = self._one(key, None, required)
        if val is None:
            return default
        try:
            return int(val)
        except ValueError as exc:
            raise ConfigError(f"{key!r} must be an integer, got {val!r}", field=key) from exc

    def get_float(self, key, default=None, required=False):
        val = self._one(key, None, required)
        if val is None:
            return default
        try:
            return float(val)
        except ValueError as exc:
            raise ConfigError(f"{key!r} must be a number, got {val!r}", field=key) from exc

    def get_bool(self, key, default=None):
        val = self._one(key, None)
        if val is None:
            return default
        low = val.lower()
        if low in ("on", "true", "1", "yes"):
            return True
        if low in ("off", "false", "0", "no"):
            return False
        raise ConfigError(f"{key!r} must be on/off, got {val!r}", field=key)

    def get_vector(self, key, default=None, required=False):
        val = self._one(key, None, required)
        if val is None:
            return default
        try:
            return np.array([float(tok) for tok in val.split()])
        except ValueError as exc:
            raise ConfigError(f"{key!r} must hold numbers, got {val!r}", field=key) from exc

    def get_float_list(self, key, default=None, required=False):
        vals = self.raw.get(key)
        if not vals:
            if required:
                raise ConfigError(f"missing required key {key!r}", field=key)
            return default
        out = []
        for val in vals:
            for tok in val.split():
                try:
                    out.append(float(tok))
                except ValueError as exc:
                    raise ConfigError(f"{key!r} must hold numbers, got {tok!r}", field=key) from exc
        return out

    def get_rows(self, key):
        """All occurrences of ``key``, each split into float tokens."""
        rows = []
        for val in self.raw.get(key, []):
            try:
                rows.append([float(tok) for tok in val.split()])
            except ValueError as exc:
                raise ConfigError(f"{key!r} must hold numbers, got {val!r}", field=key) from exc
        return rows

    def get_path_str(self, key, required=False):
        val = self._one(key, None, required)
        if val is None:
            return None
        full = val if os.path.isabs(val) else os.path.join(self.base_dir, val)
        if not os.path.exists(full):
            raise ConfigError(f"{key!r} references a missing file: {val}", field=key)
        return full


# -- model construction ---------------------------------------------------------------


def drift_from_config(cfg):
    kind = cfg.get_str("drift.kind", required=True, choices={"poly1d", "linear", "free", "builtin"})
    if kind == "builtin":
        name = cfg.get_str("drift.builtin", required=True, choices={"double-well", "ou", "zero", "mean"})
        d = cfg.get_int("dim", 1)
        if name == "double-well":
            return double_well_mean_field()
        if name == "ou":
            return ornstein_uhlenbeck(rate=cfg.get_float("drift.rate", 1.0), d=d)
        if name == "zero":
            return zero_drift(d)
        return mean_drift(d)
    if kind == "poly1d":
        local = np.zeros((1, 1))
        for row in cfg.get_rows("drift.local"):
            if len(row) != 3:
                raise ConfigError("drift.local rows need: t_exp x_exp coef", field="drift.local")
            j, k = int(row[0]), int(row[1])
            if j + 1 > local.shape[0] or k + 1 > local.shape[1]:
                grown = np.zeros((max(j + 1, local.shape[0]), max(k + 1, local.shape[1])))
                grown[: local.shape[0], : local.shape[1]] = local
                local = grown
            local[j, k] += row[2]
        ps = cfg.get_rows("drift.p")
        qs = cfg.get_rows("drift.q")
        if len(ps) != len(qs):
            raise ConfigError("drift.p and drift.q must occur in matching pairs", field="drift.p")
        return PolySeparable1D(local=local, pairs=list(zip(ps, qs)))
    d = cfg.get_int("dim", required=True)
    if kind == "linear":
        def collect(key, width):
            rows = cfg.get_rows(key)
            if not rows:
                return None
            degree = max(int(r[0]) for r in rows)
            out = np.zeros((degree + 1,) + ((d, d) if width == d * d else (d,)))
            for r in rows:
                if len(r) != width + 1:
                    raise ConfigError(f"{key} rows need: t_exp plus {width} entries", field=key)
                block = np.array(r[1:])
                out[int(r[0])] += block.reshape((d, d)) if width == d * d else block
            return out
        return LinearMeanField(d, A=collect("drift.A", d * d), b=collect("drift.b", d), C=collect("drift.C", d * d))
    comps = [[] for _ in range(d)]
    for row in cfg.get_rows("drift.F"):
        if len(row) != d + 3:
            raise ConfigError(f"drift.F rows need: component t_exp {d} x-exponents coef", field="drift.F")
        comp = int(row[0])
        if not 0 <= comp < d:
            raise ConfigError(f"drift.F component {comp} out of range", field="drift.F")
        comps[comp].append((row[-1], int(row[1]), tuple(int(e) for e in row[2:-1])))
    return DistributionFree(d, [Monomials(d, c) for c in comps])


def path_from_config(cfg, prefix, n, d):
    kind = cfg.get_str(f"{prefix}.kind", default="poly", choices={"poly", "csv", "linear"})
    if kind == "csv":
        path = read_csv(cfg.get_path_str(f"{prefix}.file", required=True))
        if n is not None and path.n != n:
            raise ConfigError(f"{prefix} grid size {path.n} differs from n = {n}", field=f"{prefix}.file")
        return path
    if n is None:
        raise ConfigError(f"{prefix} needs an explicit grid size n", field="n")
    if kind == "linear":
        x0 = cfg.get_vector(f"{prefix}.x0", required=True)
        x1 = cfg.get_vector(f"{prefix}.x1", required=True)
        return linear_path(x0, x1, n)
    rows = cfg.get_rows(f"{prefix}.coef")
    if not rows:
        raise ConfigError(f"missing {prefix}.coef rows", field=f"{prefix}.coef")
    coefs = [None] * d
    for row in rows:
        coord = int(row[0])
        if not 0 <= coord < d:
            raise ConfigError(f"{prefix}.coef coordinate {coord} out of range", field=f"{prefix}.coef")
        coefs[coord] = row[1:]
    for i, c in enumerate(coefs):
        if c is None:
            raise ConfigError(f"{prefix}.coef missing coordinate {i}", field=f"{prefix}.coef")
    return path_from_poly(coefs, n)


def norm_from_config(cfg):
    kind = cfg.get_str("norm.kind", default="sup", choices={"sup", "holder", "lp", "l2"})
    try:
        if kind == "holder":
            return NormKind.holder(cfg.get_float("norm.alpha", required=True))
        if kind == "lp":
            return NormKind.lp(cfg.get_float("norm.p", required=True))
        return NormKind(kind)
    except ValueError as exc:
        raise ConfigError(str(exc), field="norm.kind") from exc


def sim_config_from(cfg, spec, seed, threads, M_required=True):
    shift = None
    if cfg.has("girsanov_shift.kind") or cfg.has("girsanov_shift.file"):
        shift = path_from_config(cfg, "girsanov_shift", cfg.get_int("n", required=True), spec.d)
    return SimConfig(
        drift=spec,
        x=cfg.get_vector("x", required=True),
        N=cfg.get_int("N", required=True),
        n=cfg.get_int("n", required=True),
        M=cfg.get_int("M", required=M_required, default=1),
        seed=seed,
        batch_size=cfg.get_int("batch_size", 16384),
        bridge_correction=cfg.get_bool("bridge_correction", True),
        girsanov_shift=shift,
        threads=threads,
    )


# -- run orchestration ----------------------------------------------------------------


class Run:
    """Output-directory bookkeeping: lockfile, artifact registry, manifest."""

    def __init__(self, outdir, subcommand, cfg, seed, threads):
        self.outdir = outdir
        self.subcommand = subcommand
        self.cfg = cfg
        self.seed = seed
        self.threads = threads
        self.outputs = []
        self.start = time.monotonic()

    def write_text(self, name, text):
        with open(os.path.join(self.outdir, name), "w", encoding="utf-8") as fh:
            fh.write(text)
        if name not in self.outputs:
            self.outputs.append(name)

    def write_json(self, name, obj):
        self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def manifest(self):
        obj = {
            "subcommand": self.subcommand,
            "config": self.cfg.raw,
            "seed": self.seed,
            "threads": self.threads,
            "versions": {
                "ompath": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": sys.version.split()[0],
            },
            "outputs": self.outputs,
            "wall_time_s": time.monotonic() - self.start,
        }
        with open(os.path.join(self.outdir, MANIFEST), "w", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _solution_report(sol, variant):
    return {
        "converged": sol.converged,
        "method": sol.method,
        "iterations": sol.iterations,
        "residual_max": sol.residual_max,
        "initial_velocity": None if sol.initial_velocity is None else list(sol.initial_velocity),
        "action": sol.action.as_dict() if sol.action else None,
        "mean_field_term": variant,
    }


def _minimize_report(res):
    return {
        "converged": res.converged,
        "iterations": res.iterations,
        "grad_max": res.grad_max,
        "objective": res.objective,
        "action": res.action.as_dict(),
    }


def _stats_csv(stats, d):
    cols = ["t"] + [f"mean_{i + 1}" for i in range(d)] + [f"var_{i + 1}" for i in range(d)] + ["second_moment"]
    lines = [",".join(cols)]
    for k in range(stats["t"].size):
        row = [stats["t"][k], *stats["mean"][k], *stats["var"][k], stats["second_moment"][k]]
        lines.append(",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def _tube_csv(estimates):
    lines = ["eps,norm,p,se,ci_low,ci_high,samples,corrected"]
    for e in estimates:
        lines.append(
            f"{e.eps:.17g},{e.norm_label},{e.probability:.17g},{e.stderr:.17g},"
            f"{e.ci_low:.17g},{e.ci_high:.17g},{e.samples},{int(e.corrected)}"
        )
    return "\n".join(lines) + "\n"


def _variant_flag(cfg):
    variant = cfg.get_str("el.variant", default="with-velocity", choices={"with-velocity", "without-velocity"})
    return variant, variant == "with-velocity"


def cmd_action(run):
    cfg = run.cfg
    spec = drift_from_config(cfg)
    path = path_from_config(cfg, "path", cfg.get_int("n"), spec.d)
    result = om_action(spec, path)
    run.write_text("action.json", result.to_json(indent=2, sort_keys=True) + "\n")
    return 0


def _bv_problem(cfg, spec, velocity_factor, init):
    return BVProblem(
        drift=spec,
        x0=cfg.get_vector("x0", required=True),
        x1=cfg.get_vector("x1", required=True),
        n=cfg.get_int("n", required=True),
        tol=cfg.get_float("solver.tol", 1e-8),
        max_iter=cfg.get_int("solver.max_iter", 60),
        damping=cfg.get_float("solver.damping", 0.5),
        init=init,
        velocity_factor=velocity_factor,
    )


def cmd_el_solve(run):
    cfg = run.cfg
    spec = drift_from_config(cfg)
    variant, vf = _variant_flag(cfg)
    init = cfg.get_str("solver.init", default="linear", choices={"linear", "tanh", "step"})
    problem = _bv_problem(cfg, spec, vf, init)
    try:
        sol = solve_el_bvp(problem)
    except NonConvergence as exc:
        if exc.best_path is not None:
            run.write_text("path.csv", path_to_csv(exc.best_path))
            run.write_json("report.json", {
                "converged": False,
                "residual_max": exc.residual_norm,
                "message": str(exc),
                "mean_field_term": variant,
            })
        raise
    run.write_text("path.csv", path_to_csv(sol.path))
    run.write_json("report.json", _solution_report(sol, variant))
    return 0


def cmd_minimize(run):
    cfg = run.cfg
    spec = drift_from_config(cfg)
    n = cfg.get_int("n", required=True)
    if cfg.has("init.kind") or cfg.has("init.file"):
        init = path_from_config(cfg, "init", n, spec.d)
    else:
        init = cfg.get_str("init", default="linear", choices={"linear", "tanh", "step"})
    res = minimize_action(
        spec,
        cfg.get_vector("x0", required=True),
        cfg.get_vector("x1", required=True),
        n,
        init=init,
        tol=cfg.get_float("opt.tol", 1e-8),
        max_iter=cfg.get_int("opt.max_iter", 20000),
    )
    run.write_text("path.csv", path_to_csv(res.path))
    run.write_json("report.json", _minimize_report(res))
    if not res.converged:
        raise NonConvergence(
            f"minimizer stalled at gradient max-norm {res.grad_max:.3e}",
            best_path=res.path,
            residual_norm=res.grad_max,
        )
    return 0


def cmd_multistart(run):
    cfg = run.cfg
    spec = drift_from_config(cfg)
    variant, vf = _variant_flag(cfg)
    inits = (cfg.get_str("inits", default="linear tanh step") or "").split()
    results = solve_multistart(
        spec,
        cfg.get_vector("x0", required=True),
        cfg.get_vector("x1", required=True),
        cfg.get_int("n", required=True),
        inits=inits,
        tol=cfg.get_float("solver.tol", 1e-8),
        max_iter=cfg.get_int("solver.max_iter", 60),
        damping=cfg.get_float("solver.damping", 0.5),
        velocity_factor=vf,
    )
    ranking = []
    for rank, (name, sol) in enumerate(results):
        fname = f"path_{rank:03d}.csv"
        run.write_text(fname, path_to_csv(sol.path))
        entry = _solution_report(sol, variant)
        entry.update({"rank": rank, "init": name, "path_file": fname})
        ranking.append(entry)
    run.write_json("ranking.json", {"candidates": ranking})
    return 0


def cmd_simulate(run):
    cfg = run.cfg
    spec = drift_from_config(cfg)
    sim = sim_config_from(cfg, spec, run.seed, run.threads, M_required=False)
    result = simulate_ensemble(sim)
    run.write_text("stats.csv", _stats_csv(ensemble_stats(result), spec.d))
    return 0


def cmd_tube(run):
    cfg = run.cfg
    spec = drift_from_config(cfg)
    sim = sim_config_from(cfg, spec, run.seed, run.threads)
    reference = path_from_config(cfg, "path", sim.n, spec.d)
    kind = norm_from_config(cfg)
    eps_list = cfg.get_float_list("eps", required=True)
    estimates = [estimate_tube_probability(sim, reference, eps, kind) for eps in eps_list]
    run.write_text("tube.csv", _tube_csv(estimates))
    return 0


def cmd_ratio(run):
    cfg = run.cfg
    spec = drift_from_config(cfg)
    sim = sim_config_from(cfg, spec, run.seed, run.threads)
    phi1 = path_from_config(cfg, "path1", sim.n, spec.d)
    phi2 = path_from_config(cfg, "path2", sim.n, spec.d)
    kind = norm_from_config(cfg)
    table = estimate_om_ratio(sim, phi1, phi2, cfg.get_float_list("eps", required=True), kind)
    run.write_text("ratio.csv", table.to_csv())
    return 0


def cmd_paper_example(run):
    """End-to-end showcase on the built-in double-well mean-field model.

    Solves the 1 -> -1 transition with both mean-field term variants, refines
    it by direct minimization, evaluates the actions, and closes the loop
    with a two-path Monte Carlo tube-ratio check against the linear path.
    """
    cfg = run.cfg
    spec = double_well_mean_field()
    n = cfg.get_int("n", 400)
    x0 = cfg.get_vector("x0", np.array([1.0]))
    x1 = cfg.get_vector("x1", np.array([-1.0]))
    tol = cfg.get_float("solver.tol", 1e-8)

    sol_velocity = solve_el_bvp(BVProblem(spec, x0, x1, n, tol=tol, velocity_factor=True))
    run.write_text("el_with_velocity.csv", path_to_csv(sol_velocity.path))
    sol_plain = solve_el_bvp(BVProblem(spec, x0, x1, n, tol=tol, velocity_factor=False))
    run.write_text("el_without_velocity.csv", path_to_csv(sol_plain.path))
    mini = minimize_action(spec, x0, x1, n, init=sol_velocity.path, tol=cfg.get_float("opt.tol", 1e-8))
    run.write_text("minimizer.csv", path_to_csv(mini.path))

    gap = float(np.max(np.abs(sol_velocity.path.values - sol_plain.path.values)))
    run.write_json("actions.json", {
        "el_with_velocity": _solution_report(sol_velocity, "with-velocity"),
        "el_without_velocity": _solution_report(sol_plain, "without-velocity"),
        "minimizer": _minimize_report(mini),
        "variant_sup_distance": gap,
        "metastable_states": [1.0, -1.0, 0.0],
    })

    sim = SimConfig(
        drift=spec,
        x=x0,
        N=cfg.get_int("N", 2000),
        n=n,
        M=cfg.get_int("M", 20000),
        seed=run.seed,
        batch_size=cfg.get_int("batch_size", 16384),
        bridge_correction=cfg.get_bool("bridge_correction", True),
        threads=run.threads,
    )
    eps_list = cfg.get_float_list("eps", [1.0, 0.8, 0.6])
    table = estimate_om_ratio(sim, mini.path, linear_path(x0, x1, n), eps_list, NormKind.sup())
    run.write_text("ratio.csv", table.to_csv())
    return 0


COMMANDS = {
    "action": cmd_action,
    "el-solve": cmd_el_solve,
    "minimize": cmd_minimize,
    "multistart": cmd_multistart,
    "simulate": cmd_simulate,
    "tube": cmd_tube,
    "ratio": cmd_ratio,
    "paper-example": cmd_paper_example,
}


def _error_payload(exc):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("field", "line", "residual_norm"):
        val = getattr(exc, attr, None)
        if val is not None:
            payload[attr] = val
    return payload


def main(argv=None):
    parser = argparse.ArgumentParser(prog="ompath", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="config file (or a manifest.json to re-run)")
    parser.add_argument("--out", required=True, help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for trajectory batches")
    args = parser.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    lock_path = os.path.join(args.out, LOCKFILE)
    try:
        lock_fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        print(f"error: output directory is locked by another run ({lock_path})", file=sys.stderr)
        return 1
    run = None
    try:
        if args.config is None and args.subcommand != "paper-example":
            raise ConfigError("--config is required for this subcommand", field="config")
        raw = load_config(args.config) if args.config else {}
        base = os.path.dirname(os.path.abspath(args.config)) if args.config else "."
        if args.seed is not None:
            raw["seed"] = [str(args.seed)]
        cfg = Config(raw, base)
        seed = cfg.get_int("seed")
        if seed is None:
            seed = 20240801 if args.subcommand == "paper-example" else None
        if seed is None:
            raise ConfigError("a seed is required (config key 'seed' or --seed)", field="seed")
        raw["seed"] = [str(seed)]
        run = Run(args.out, args.subcommand, cfg, seed, max(1, args.threads))
        status = COMMANDS[args.subcommand](run)
        run.manifest()
        return status
    except OmpathError as exc:
        payload = _error_payload(exc)
        try:
            with open(os.path.join(args.out, "error.json"), "w", encoding="utf-8") as fh:
                fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        except OSError:
            pass
        if run is not None:
            run.manifest()
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 3 if isinstance(exc, NonConvergence) else 1
    finally:
        os.close(lock_fd)
        os.unlink(lock_path)


if __name__ == "__main__":
    sys.exit(main())
