"""Experiment configuration, sweep orchestration and CSV output."""

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .bcd import run_bcd_fp_dc
from .benchmarks import SaConfig, bcd_mse_solve, bcd_sa_solve, no_irs_solve, rand_phase_solve, sa_solve
from .metrics import constraint_violations, total_cost
from .scenario import DEFAULTS, FadingModel, default_params, generate_channels, validate

log = logging.getLogger(__name__)

SWEEP_VARIABLES = ("irs_elements", "num_users")
CONVERGENCE_COLUMNS = ("run_id", "algo", "sweep_value", "seed", "iteration", "cost", "energy",
                       "latency", "wallclock_s")
SWEEP_COLUMNS = ("algo", "sweep_variable", "sweep_value", "n_seeds", "mean_cost", "std_cost",
                 "mean_energy", "mean_latency")
FAILED = "failed"


class ConfigError(ValueError):
    pass


class OutputError(OSError):
    pass


def _sa(params, ch, N, eps, seed):
    return sa_solve(params, ch, SaConfig(seed=seed))


def _bcd_sa(params, ch, N, eps, seed):
    return bcd_sa_solve(params, ch, SaConfig(seed=seed), N, eps, seed=seed)


ALGORITHMS = {
    "bcd-fp-dc": lambda p, ch, N, eps, seed: run_bcd_fp_dc(p, ch, N, eps, seed=seed),
    "sa": _sa,
    "bcd-sa": _bcd_sa,
    "bcd-mse": lambda p, ch, N, eps, seed: bcd_mse_solve(p, ch, N, eps, seed=seed),
    "rand-phase": lambda p, ch, N, eps, seed: rand_phase_solve(p, ch, N, eps, seed=seed),
    "no-irs": lambda p, ch, N, eps, seed: no_irs_solve(p, ch, N, eps, seed=seed),
}

# scenario keys accepted besides the tabulated constants
_SCENARIO_KEYS = {"num_users", "irs_elements"} | set(DEFAULTS)


@dataclass
class ExperimentConfig:
    """One experiment. ``scenario`` overrides the default constants by name.

    ``outer_tol`` of None means 1e-4 of the initial cost. Wall-clock times are
    only written when ``record_wallclock`` is set, so default outputs are
    byte-for-byte reproducible.
    """

    scenario: dict = field(default_factory=dict)
    fading: dict = field(default_factory=dict)
    algo: str = "bcd-fp-dc"
    outer_iters: int = 60
    outer_tol: float = None
    seeds: list = field(default_factory=lambda: list(range(10)))
    sweep: dict = None
    output_dir: str = "results"
    record_wallclock: bool = False

    def __post_init__(self):
        errs = self.errors()
        if errs:
            raise ConfigError("; ".join(errs))

    def errors(self):
        errs = []
        if not isinstance(self.scenario, dict):
            errs.append("scenario must be an object")
        else:
            bad = sorted(set(self.scenario) - _SCENARIO_KEYS)
            if bad:
                errs.append(f"unknown scenario keys: {', '.join(bad)}")
        if not isinstance(self.fading, dict):
            errs.append("fading must be an object")
        else:
            known = {f.name for f in fields(FadingModel)}
            bad = sorted(set(self.fading) - known)
            if bad:
                errs.append(f"unknown fading keys: {', '.join(bad)}")
            else:
                errs += FadingModel(**self.fading).errors()
        if self.algo not in ALGORITHMS:
            errs.append(f"unknown algo {self.algo!r}; choose from {', '.join(ALGORITHMS)}")
        if not _is_int(self.outer_iters) or self.outer_iters < 1:
            errs.append("outer_iters must be an integer >= 1")
        if self.outer_tol is not None and not (_is_num(self.outer_tol) and self.outer_tol > 0):
            errs.append("outer_tol must be positive")
        if not isinstance(self.seeds, list) or not all(_is_int(s) for s in self.seeds):
            errs.append("seeds must be a list of integers")
        if self.sweep is not None:
            if not isinstance(self.sweep, dict) or set(self.sweep) != {"variable", "values"}:
                errs.append("sweep must have exactly the keys 'variable' and 'values'")
            else:
                if self.sweep["variable"] not in SWEEP_VARIABLES:
                    errs.append(f"sweep variable must be one of {', '.join(SWEEP_VARIABLES)}")
                vals = self.sweep["values"]
                if not isinstance(vals, list) or not all(_is_int(v) and v > 0 for v in vals):
                    errs.append("sweep values must be positive integers")
        return errs

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config document must be an object")
        known = {f.name for f in fields(cls)}
        bad = sorted(set(doc) - known)
        if bad:
            raise ConfigError(f"unknown config keys: {', '.join(bad)}")
        return cls(**doc)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        return cls.from_dict(doc)

    def to_dict(self):
        return asdict(self)

    def with_(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig(**d)

    def sweep_points(self):
        """``(variable, values)``; without a sweep a single point at the base scenario."""
        if self.sweep is None:
            return None, [None]
        return self.sweep["variable"], list(self.sweep["values"])


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def build_scenario(cfg, seed, variable=None, value=None):
    """System constants and channels for one (seed, sweep value) cell.

    Users and channels are keyed by seed, so cells with the same seed share
    their realizations across algorithms and sweep values.
    """
    sc = dict(cfg.scenario)
    if variable is not None:
        sc[variable] = value
    params = default_params(num_users=sc.pop("num_users", 3), irs_elements=sc.pop("irs_elements", 64),
                            seed=seed, **sc)
    errs = validate(params)
    if errs:
        raise ConfigError("; ".join(errs))
    ch = generate_channels(params, FadingModel(**cfg.fading), seed=seed)
    return params, ch


@dataclass
class RunRecord:
    run_id: int
    algo: str
    sweep_value: object
    seed: int
    trace: object = None
    decision: object = None
    error: str = None

    @property
    def ok(self):
        return self.error is None


def run_one(cfg, seed, variable=None, value=None, algo=None):
    """Solve one cell; returns ``(decision, trace)`` after re-validating feasibility."""
    algo = algo or cfg.algo
    params, ch = build_scenario(cfg, seed, variable, value)
    dec, trace = ALGORITHMS[algo](params, ch, cfg.outer_iters, cfg.outer_tol, seed)
    if dec.phases.size != params.M:
        # the no-IRS baseline solves the system with the surface removed
        params, ch = params.with_(irs_elements=0), ch.without_irs()
    errs = constraint_violations(dec, params)
    if errs:
        raise RuntimeError("final decision infeasible: " + "; ".join(errs))
    if not cfg.record_wallclock:
        trace.rows = [(*r[:4], None) for r in trace.rows]
    total_cost(dec, ch, params)  # raises if an active link has zero rate
    return dec, trace


def run_sweep(cfg, algos=None):
    """Run every (algo, sweep value, seed) cell; returns ``(records, summaries)``.

    A cell that raises is recorded as failed and the sweep continues.
    """
    algos = list(algos or [cfg.algo])
    variable, values = cfg.sweep_points()
    records = []
    for algo in algos:
        for value in values:
            for seed in cfg.seeds:
                rec = RunRecord(len(records), algo, value, int(seed))
                try:
                    rec.decision, rec.trace = run_one(cfg, seed, variable, value, algo)
                except ConfigError:
                    raise
                except Exception as e:  # noqa: BLE001 - cell failures are reported, not fatal
                    log.warning("%s value=%s seed=%s failed: %s", algo, value, seed, e)
                    rec.error = f"{type(e).__name__}: {e}"
                records.append(rec)
                log.info("%s value=%s seed=%s done", algo, value, seed)
    return records, summarize(records, variable)


def summarize(records, variable):
    """Per (algo, sweep value) mean and sample standard deviation of the final values."""
    cells = {}
    for rec in records:
        cells.setdefault((rec.algo, rec.sweep_value), []).append(rec)
    rows = []
    for (algo, value), recs in cells.items():
        finals = np.array([r.trace.final()[1:4] for r in recs if r.ok and r.trace.rows]).reshape(-1, 3)
        n = finals.shape[0]
        rows.append(dict(
            algo=algo, sweep_variable=variable or "", sweep_value=value, n_seeds=n,
            n_failed=len(recs) - n,
            mean_cost=finals[:, 0].mean() if n else np.nan,
            std_cost=finals[:, 0].std(ddof=1) if n > 1 else (0.0 if n else np.nan),
            mean_energy=finals[:, 1].mean() if n else np.nan,
            mean_latency=finals[:, 2].mean() if n else np.nan,
        ))
    rows.sort(key=lambda r: (r["algo"], _sort_value(r["sweep_value"])))
    return rows


def _sort_value(v):
    return (0, 0) if v is None else (1, v)


def fmt(x):
    """12 significant digits; empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, (str,)):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.12g}"


def emit_outputs(records, summaries, output_dir, meta=None):
    """Write convergence.csv, sweep.csv and meta.json into ``output_dir``.

    Rows are sorted by (algo, sweep_value, seed, iteration). A failed run
    contributes one convergence row with ``failed`` in the cost column.
    """
    try:
        os.makedirs(output_dir, exist_ok=True)
        conv_path = os.path.join(output_dir, "convergence.csv")
        with open(conv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CONVERGENCE_COLUMNS)
            for rec in sorted(records, key=lambda r: (r.algo, _sort_value(r.sweep_value), r.seed)):
                head = [rec.run_id, rec.algo, fmt(rec.sweep_value), rec.seed]
                if not rec.ok:
                    w.writerow(head + ["", FAILED, "", "", ""])
                    continue
                for it, cost, en, lat, wall in rec.trace.rows:
                    w.writerow(head + [it, fmt(cost), fmt(en), fmt(lat), fmt(wall)])
        sweep_path = os.path.join(output_dir, "sweep.csv")
        with open(sweep_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for s in summaries:
                if s["n_seeds"] == 0:
                    w.writerow([s["algo"], s["sweep_variable"], fmt(s["sweep_value"]), 0]
                               + [FAILED] * 4)
                    continue
                w.writerow([s["algo"], s["sweep_variable"], fmt(s["sweep_value"]), s["n_seeds"]]
                           + [fmt(s[c]) for c in SWEEP_COLUMNS[4:]])
        if meta is not None:
            with open(os.path.join(output_dir, "meta.json"), "w") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True)
                fh.write("\n")
    except OSError as e:
        raise OutputError(f"cannot write outputs to {output_dir}: {e.strerror or e}") from e
    return conv_path, sweep_path


def run_meta(cfg, records):
    return dict(
        config=cfg.to_dict(),
        n_seeds=len(cfg.seeds),
        n_runs=len(records),
        n_failed=sum(not r.ok for r in records),
    )
