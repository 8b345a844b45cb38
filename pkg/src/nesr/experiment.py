"""Seeded multi-run experiments: orchestration, checkpoints and reports.

Output directory layout::

    config.txt                 the effective configuration
    report.csv / report.txt    one row per run plus a median row
    logs/run_NNN.jsonl         one JSON object per generation
    checkpoints/run_NNN.json   selected model, metrics and expression

Wall-clock times live in the checkpoints only, so two runs of the same
configuration produce byte-identical reports.
"""

from __future__ import annotations

import csv
import io
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import predict
from .config import RunConfig
from .evolution import run_search
from .extraction import extract_expression, simplify, to_latex, to_text
from .losses import composite_loss
from .problems.benchmarks import generate_problem, rmse_int_ext
from .topology import Subtopology, complexity_counts, preset_master

REPORT_FIELDS = ("run", "seed", "status", "units", "links", "rmse_valid", "rmse_constraint",
                 "rmse_int_ext", "budget_used", "expression")


@dataclass
class RunRecord:
    run: int
    seed: int
    status: str = "ok"
    units: int = 0
    links: int = 0
    rmse_valid: float = math.nan
    rmse_constraint: float = math.nan
    rmse_int_ext: float = math.nan
    budget_used: int = 0
    expression: str = ""
    latex: str = ""
    wall_time: float = 0.0
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class RunReport:
    config: RunConfig
    runs: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.runs)

    def medians(self) -> dict:
        good = [r for r in self.runs if r.ok]
        out = {}
        for key in ("units", "links", "rmse_valid", "rmse_constraint", "rmse_int_ext", "budget_used"):
            vals = np.array([getattr(r, key) for r in good], dtype=float)
            # linear interpolation between order statistics, as in memory selection
            out[key] = float(np.quantile(vals, 0.5)) if vals.size else math.nan
        return out

    @property
    def median_complexity(self) -> str:
        m = self.medians()
        return f"{_g(m['units'])}/{_g(m['links'])}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in sorted(self.runs, key=lambda r: r.run):
            w.writerow([r.run, r.seed, r.status, r.units, r.links, _f(r.rmse_valid),
                        _f(r.rmse_constraint), _f(r.rmse_int_ext), r.budget_used, r.expression])
        m = self.medians()
        w.writerow(["median", "", "", _g(m["units"]), _g(m["links"]), _f(m["rmse_valid"]),
                    _f(m["rmse_constraint"]), _f(m["rmse_int_ext"]), _g(m["budget_used"]), ""])
        return buf.getvalue()

    def to_table(self) -> str:
        m = self.medians()
        lines = [f"problem: {self.config.problem}   runs: {len(self.runs)}",
                 f"{'run':>4} {'seed':>6} {'complexity':>10} {'rmse_valid':>11} {'rmse_constr':>11} "
                 f"{'rmse_int+ext':>12} {'steps':>6}  expression"]
        for r in sorted(self.runs, key=lambda r: r.run):
            if not r.ok:
                lines.append(f"{r.run:>4} {r.seed:>6}  FAILED: {r.error.splitlines()[-1] if r.error else ''}")
                continue
            lines.append(f"{r.run:>4} {r.seed:>6} {f'{r.units}/{r.links}':>10} {r.rmse_valid:>11.3e} "
                         f"{r.rmse_constraint:>11.3e} {r.rmse_int_ext:>12.3e} {r.budget_used:>6}  "
                         f"{_clip(r.expression)}")
        lines.append(f"median complexity {self.median_complexity}   median rmse_int+ext "
                     f"{m['rmse_int_ext']:.3e}")
        return "\n".join(lines) + "\n"


def _clip(text, width=80) -> str:
    return text if len(text) <= width else text[:width - 3] + "..."


def _f(v) -> str:
    return repr(float(v))


def _g(v) -> str:
    return "nan" if v != v else f"{v:g}"


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------


def problem_for(config: RunConfig):
    return generate_problem(config.problem, config.data_seed, config.constraint_samples)


def master_for(config: RunConfig, problem):
    name = problem.master if config.master == "auto" else config.master
    return preset_master(name, problem.input_dim)


def model_record(run: int, seed: int, model: Subtopology, problem, config: RunConfig) -> RunRecord:
    """Metrics of a model recomputed from scratch on the problem definition."""
    comp = composite_loss("L_II", model, problem.bound_data(), config.loss)
    units, links = complexity_counts(model.master, model.weights[None], model.skip[None])
    expr = simplify(extract_expression(model, problem.input_names, config.theta_div), config.theta_a)
    return RunRecord(
        run=run, seed=seed, units=int(units[0]), links=int(links[0]),
        rmse_valid=comp.rmse_valid, rmse_constraint=comp.l_cve,
        rmse_int_ext=rmse_int_ext(model, problem), expression=to_text(expr), latex=to_latex(expr))


def execute_run(config: RunConfig, run: int, out_dir: Path | None = None) -> RunRecord:
    seed = config.seed + run
    cfg = config.replace(seed=seed)
    problem = problem_for(cfg)
    master = master_for(cfg, problem)
    log_file = None
    if out_dir is not None:
        (out_dir / "logs").mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / "logs" / f"run_{run:03d}.jsonl", "w")
    try:
        def on_log(entry):
            if log_file is not None:
                log_file.write(json.dumps(entry, sort_keys=True) + "\n")

        result = run_search(master, problem.bound_data(), cfg, test_set=(problem.X_test, problem.y_test),
                            on_log=on_log, run_id=run)
    finally:
        if log_file is not None:
            log_file.close()
    rec = model_record(run, seed, result.best, problem, cfg)
    rec.budget_used = result.budget_used
    rec.wall_time = result.wall_time
    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoints" / f"run_{run:03d}.json", cfg, rec, result.best)
    return rec


def _safe_run(args):
    config, run, out_dir = args
    try:
        return execute_run(config, run, out_dir)
    except Exception:
        return RunRecord(run=run, seed=config.seed + run, status="failed", error=traceback.format_exc())


def execute_experiment(config: RunConfig, out_dir=None, jobs: int = 1) -> RunReport:
    """Run ``config.runs`` independent seeded runs and write the report.

    ``out_dir`` defaults to ``config.output_dir``; pass ``False`` to keep
    everything in memory.
    """
    config.validate()
    problem_for(config)  # fail fast on an unknown problem before any run
    if out_dir is None:
        out_dir = config.output_dir
    path = Path(out_dir) if out_dir is not False else None
    if path is not None:
        path.mkdir(parents=True, exist_ok=True)
        (path / "config.txt").write_text(config.to_text())
    tasks = [(config, i, path) for i in range(config.runs)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_safe_run, tasks))
    else:
        records = [_safe_run(t) for t in tasks]
    report = RunReport(config, sorted(records, key=lambda r: r.run))
    if path is not None:
        write_report(report, path)
    return report


def write_report(report: RunReport, out_dir):
    out_dir = Path(out_dir)
    (out_dir / "report.csv").write_text(report.to_csv())
    (out_dir / "report.txt").write_text(report.to_table())


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, config: RunConfig, record: RunRecord, model: Subtopology):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": config.to_text(),
        "record": record.__dict__,
        "model": model.to_dict(),
        "fitness": model.fitness.to_dict() if model.fitness else None,
    }
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path):
    """``(config, record, model)`` from a checkpoint file."""
    doc = json.loads(Path(path).read_text())
    config = RunConfig.from_text(doc["config"])
    record = RunRecord(**doc["record"])
    model = Subtopology.from_dict(doc["model"])
    if doc.get("fitness"):
        from .evolution.fitness import FitnessVector

        model.fitness = FitnessVector(**doc["fitness"])
    return config, record, model


def rebuild_report(out_dir) -> RunReport:
    """Recompute every run's metrics from its checkpoint and the problem definition."""
    out_dir = Path(out_dir)
    config = RunConfig.from_file(out_dir / "config.txt")
    records = []
    for i in range(config.runs):
        ck = out_dir / "checkpoints" / f"run_{i:03d}.json"
        if not ck.exists():
            records.append(RunRecord(run=i, seed=config.seed + i, status="failed", error="missing checkpoint"))
            continue
        cfg, saved, model = load_checkpoint(ck)
        rec = model_record(saved.run, saved.seed, model, problem_for(cfg), cfg)
        rec.budget_used = saved.budget_used
        rec.wall_time = saved.wall_time
        records.append(rec)
    return RunReport(config, records)


def evaluate_checkpoint(path, X=None, y=None) -> dict:
    """Expression and metrics of a checkpointed model, optionally on extra data."""
    cfg, saved, model = load_checkpoint(path)
    problem = problem_for(cfg)
    rec = model_record(saved.run, saved.seed, model, problem, cfg)
    out = {"expression": rec.expression, "latex": rec.latex, "units": rec.units, "links": rec.links,
           "rmse_valid": rec.rmse_valid, "rmse_constraint": rec.rmse_constraint,
           "rmse_int_ext": rec.rmse_int_ext}
    if X is not None:
        pred = predict(model, X)
        out["predictions"] = pred
        if y is not None:
            r = np.where(np.isfinite(pred), pred - np.asarray(y, dtype=float), 1e6)
            out["rmse_data"] = float(np.sqrt(np.mean(r * r)))
    return out


# ---------------------------------------------------------------------------
# Data export
# ---------------------------------------------------------------------------


def write_problem_csvs(problem, out_dir):
    """Training, validation and test sets as CSV plus constraint samples as JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = list(problem.input_names) + ["y"]
    for name, X, y in (("train", problem.X_train, problem.y_train), ("valid", problem.X_valid, problem.y_valid),
                       ("test", problem.X_test, problem.y_test)):
        write_csv(out_dir / f"{name}.csv", header, np.column_stack([X, y]))
    if problem.constraints is not None:
        (out_dir / "constraints.json").write_text(json.dumps(problem.constraints.to_dict(), indent=1) + "\n")
    return out_dir


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path):
    """``(header, array)`` of a numeric CSV with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
