"""Monte Carlo experiment runner, regret accounting and CSV output.

Every (policy, replication) pair is an independent job seeded with
``SeedSequence((base_seed, rep, policy_index))``.  Jobs may run in any order
on any number of worker processes; results are sorted by (policy index,
rep) before anything is aggregated or written, so output bytes depend only
on the configuration.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import lower_bound_constant
from .env import LinearBanditEnv, replication_seed
from .errors import ConfigError, NumericalError
from .instances import ActionSet, Instance, compute_gaps, counterexample, instance_from_dict, load_instance
from .linalg import is_invertible, psd_solve, symmetrize
from .policies import PolicyConfig, RegretTrace, policy_run

TRACE_COLUMNS = ("rep_id", "policy", "t", "arm_index", "instant_regret", "cum_regret")
SUMMARY_COLUMNS = ("policy", "n", "reps", "mean_final_regret", "stderr", "regret_over_log_n", "c_lower_bound")
DIAGNOSTIC_SLACK = 1.2


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    instance: Instance
    horizon: int
    policies: tuple[PolicyConfig, ...]
    reps: int = 1
    base_seed: int = 0
    trace_csv: Path | None = None
    summary_csv: Path | None = None
    full_trace: bool = False
    noiseless: bool = False
    workers: int | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        names = [p.display for p in self.policies]
        dup = sorted({x for x in names if names.count(x) > 1})
        if dup:
            raise ConfigError(f"duplicate policy names {dup}; give each a distinct 'label'")
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @classmethod
    def from_dict(cls, data, source: str = "<experiment>", base_dir=".") -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: expected a JSON object")
        allowed = {"instance", "horizon", "policies", "reps", "base_seed", "outputs", "noiseless", "workers"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"{source}: unknown field(s) {sorted(unknown)}")
        for key in ("instance", "horizon", "policies"):
            if key not in data:
                raise ConfigError(f"{source}: missing field {key!r}")
        base_dir = Path(base_dir)

        entry = data["instance"]
        if isinstance(entry, str):
            inst = load_instance(base_dir / entry)
        else:
            inst = instance_from_dict(entry, f"{source}: field 'instance'")

        def integer(key, default=None, minimum=None):
            v = data.get(key, default)
            if v is None:
                return None
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{source}: field {key!r} must be an integer, got {v!r}")
            if minimum is not None and v < minimum:
                raise ConfigError(f"{source}: field {key!r} must be >= {minimum}, got {v}")
            return v

        pols = data["policies"]
        if not isinstance(pols, list) or not pols:
            raise ConfigError(f"{source}: field 'policies' must be a non-empty list")
        policies = tuple(PolicyConfig.from_dict(p, f"{source}: policies[{i}]") for i, p in enumerate(pols))

        outputs = data.get("outputs", {}) or {}
        if not isinstance(outputs, dict):
            raise ConfigError(f"{source}: field 'outputs' must be an object")
        bad = set(outputs) - {"trace_csv", "summary_csv", "full_trace"}
        if bad:
            raise ConfigError(f"{source}: unknown output field(s) {sorted(bad)}")

        def out_path(key):
            v = outputs.get(key)
            if v is None:
                return None
            if not isinstance(v, str):
                raise ConfigError(f"{source}: outputs.{key} must be a path string")
            return base_dir / v

        try:
            return cls(
                instance=inst,
                horizon=integer("horizon", minimum=1),
                policies=policies,
                reps=integer("reps", 1, minimum=1),
                base_seed=integer("base_seed", 0, minimum=0),
                trace_csv=out_path("trace_csv"),
                summary_csv=out_path("summary_csv"),
                full_trace=bool(outputs.get("full_trace", False)),
                noiseless=bool(data.get("noiseless", False)),
                workers=integer("workers", None, minimum=1),
            )
        except ConfigError as exc:
            raise ConfigError(f"{source}: {exc}") from None


def load_experiment(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return ExperimentConfig.from_dict(data, str(path), path.parent)


# --- running -----------------------------------------------------------------


@dataclass(frozen=True)
class GramAverage:
    matrix: np.ndarray
    reps: int


def gram_average(traces) -> GramAverage:
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to average")
    total = np.zeros_like(traces[0].gram)
    for tr in traces:
        total += tr.gram
    return GramAverage(symmetrize(total / len(traces)), len(traces))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list[RegretTrace]
    grams: dict[str, GramAverage] = field(default_factory=dict)

    def by_policy(self, name: str) -> list[RegretTrace]:
        return [t for t in self.traces if t.policy == name]


def _job(args) -> tuple[int, int, RegretTrace]:
    inst, n, cfg, policy_index, rep, base_seed, full, noiseless = args
    env = LinearBanditEnv(inst, n, replication_seed(base_seed, rep, policy_index), noiseless=noiseless)
    trace = policy_run(cfg, env, full_trace=full)
    trace.rep_id = rep
    return policy_index, rep, trace


def default_workers() -> int:
    return os.cpu_count() or 1


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """All reps of all policies; ``workers`` overrides the config (1 runs in-process)."""
    workers = workers or cfg.workers or default_workers()
    jobs = [
        (cfg.instance, cfg.horizon, p, i, r, cfg.base_seed, cfg.full_trace, cfg.noiseless)
        for i, p in enumerate(cfg.policies)
        for r in range(cfg.reps)
    ]
    if workers == 1 or len(jobs) == 1:
        done = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            done = list(pool.map(_job, jobs))
    done.sort(key=lambda item: (item[0], item[1]))
    traces = [tr for _, _, tr in done]
    grams = {p.display: gram_average(tr for tr in traces if tr.policy == p.display) for p in cfg.policies}
    return ExperimentResult(cfg, traces, grams)


# --- tables ------------------------------------------------------------------


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple]
    notes: list[str] = field(default_factory=list)

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def to_text(self) -> str:
        cells = [list(self.columns)] + [[_fmt_text(v) for v in r] for r in self.rows]
        widths = [max(len(row[j]) for row in cells) for j in range(len(self.columns))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines + self.notes)


def _fmt_text(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _stderr(x: np.ndarray) -> float:
    if x.size < 2:
        return math.nan
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def _safe_lower_bound(inst: Instance) -> float:
    try:
        return lower_bound_constant(inst)
    except NumericalError:
        return math.nan


def summary_table(result: ExperimentResult, c_lower: float | None = None) -> Table:
    cfg = result.config
    if c_lower is None:
        c_lower = _safe_lower_bound(cfg.instance)
    log_n = math.log(cfg.horizon) if cfg.horizon > 1 else math.nan
    rows = []
    for p in cfg.policies:
        finals = np.array([t.final_regret for t in result.by_policy(p.display)])
        mean = float(finals.mean())
        rows.append((p.display, cfg.horizon, int(finals.size), mean, _stderr(finals), mean / log_n, c_lower))
    return Table(SUMMARY_COLUMNS, rows)


def kl_decomposition(counts, actions, theta, theta_prime) -> float:
    """Divergence between the observation laws under two parameters: 1/2 sum_x T_x <x, theta - theta'>^2."""
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    arms = actions.arms if isinstance(actions, ActionSet) else np.asarray(actions, dtype=float)
    diff = np.asarray(theta, dtype=float) - np.asarray(theta_prime, dtype=float)
    return 0.5 * float(counts @ (arms @ diff) ** 2)


def lower_bound_diagnostic(gram_avg: GramAverage, inst: Instance, n: int, slack: float = DIAGNOSTIC_SLACK) -> Table:
    """Per suboptimal arm: log(n) ||x - x*||^2 in the inverse average Gram, against gap^2 / 2.

    A singular average Gram matrix is reported in the notes (such a policy
    pays linear regret on some nearby instance); every row then fails.
    """
    info = compute_gaps(inst)
    G = np.asarray(gram_avg.matrix if isinstance(gram_avg, GramAverage) else gram_avg, dtype=float)
    xstar = inst.arms[info.optimal_indices[0]]
    singular = not is_invertible(G)
    log_n = math.log(n)
    rows = []
    for x in np.flatnonzero(info.suboptimal):
        bound = info.gaps[x] ** 2 / 2.0
        if singular:
            lhs = math.inf
        else:
            v = inst.arms[x] - xstar
            lhs = log_n * float(v @ psd_solve(G, v))
        ratio = lhs / bound
        rows.append((int(x), float(info.gaps[x]), lhs, bound, ratio, bool(ratio <= slack)))
    notes = []
    if singular:
        notes.append("average Gram matrix is singular: some direction is never explored")
    return Table(("arm_index", "gap", "log_n_norm", "bound", "ratio", "passed"), rows, notes)


def counterexample_report(alpha_conf: float, eps: float, n: int, reps: int, seed: int = 0,
                          workers: int | None = None) -> Table:
    """Optimism, Thompson sampling and the optimal policy on the three-arm trap instance."""
    inst = counterexample(alpha_conf, eps)
    names = ("oful", "lints", "optimal")
    cfg = ExperimentConfig(
        instance=inst,
        horizon=n,
        policies=tuple(PolicyConfig(p, alpha_conf=alpha_conf) for p in names),
        reps=reps,
        base_seed=seed,
    )
    result = run_experiment(cfg, workers)
    c_lower = lower_bound_constant(inst)
    log_n = math.log(n)
    pull_bound = 2.0 + 4.0 * alpha_conf * log_n
    rows = []
    for p in names:
        tr = result.by_policy(p)
        finals = np.array([t.final_regret for t in tr])
        e2 = np.array([t.pull_counts[1] for t in tr], dtype=float)
        mean = float(finals.mean())
        rows.append((p, n, reps, mean, _stderr(finals), mean / log_n, float(e2.mean()), pull_bound, c_lower))
    cols = ("policy", "n", "reps", "mean_final_regret", "stderr", "regret_over_log_n",
            "mean_e2_pulls", "e2_pull_bound", "c_lower_bound")
    return Table(cols, rows)


# --- CSV ---------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def trace_rows(traces):
    for tr in traces:
        for t, a, r, c in zip(tr.rounds, tr.arms, tr.instant_regret, tr.cum_regret):
            yield (tr.rep_id, tr.policy, t, a, r, c)


def write_csv(data, path) -> None:
    """Write a list of regret traces (trace schema) or a :class:`Table` to a path or open text stream."""
    if isinstance(data, Table):
        columns, rows = data.columns, data.rows
    else:
        columns, rows = TRACE_COLUMNS, trace_rows(list(data))
    if hasattr(path, "write"):
        _write_rows(path, columns, rows)
    else:
        with open(path, "w", newline="") as fh:
            _write_rows(fh, columns, rows)


def _write_rows(fh, columns, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])


def write_outputs(result: ExperimentResult, summary: Table | None = None) -> None:
    cfg = result.config
    if cfg.trace_csv is not None:
        write_csv(result.traces, cfg.trace_csv)
    if cfg.summary_csv is not None:
        write_csv(summary or summary_table(result), cfg.summary_csv)
