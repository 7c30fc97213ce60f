"""Replicated simulate -> estimate -> infer experiments and their summary tables.

Replication ``r`` of a grid row uses the driver seed ``base_seed + r``.  Paths
are simulated in vectorised batches (a batch row is bit-identical to the
single-path simulation with the same seed) and batches may be spread over a
process pool; records are sorted by replication index before aggregation, so
the table never depends on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .avar import joint_fit, studentize
from .errors import LevySDEError, StudyFailedError
from .gqmle import fit_gqmle
from .levy import LevyDriver, make_driver
from .models import get_model
from .residual import builtin_phi_cos
from .simulate import ObservationSeries, SimulationPlan, simulate_paths

log = logging.getLogger(__name__)

FAILURE_CAP = 0.2
BATCH_INCREMENTS = 5_000_000

_KNOWN_KEYS = {
    "model", "theta0", "driver", "delta", "rate", "grid", "u", "replications",
    "base_seed", "fine_factor", "ci_level", "workers", "x0",
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    theta0: tuple[float, ...]
    driver: str
    grid: tuple[tuple[float, float], ...]
    u: tuple[float, ...]
    delta: Optional[float] = None
    rate: Optional[float] = None
    replications: int = 200
    base_seed: int = 0
    fine_factor: int = 10
    ci_level: float = 0.95
    workers: int = 1
    x0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta0", tuple(float(v) for v in self.theta0))
        object.__setattr__(self, "grid", tuple((float(T), float(h)) for T, h in self.grid))
        object.__setattr__(self, "u", tuple(float(v) for v in self.u))
        if not self.grid:
            raise ValueError("grid must list at least one (T, h) pair")
        if not self.u:
            raise ValueError("u must list at least one frequency")
        if int(self.replications) < 1:
            raise ValueError("replications must be >= 1")
        if int(self.fine_factor) < 1:
            raise ValueError("fine_factor must be >= 1")
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")
        if not 0 <= int(self.base_seed) or int(self.base_seed) + int(self.replications) > 2**64:
            raise ValueError("seeds base_seed .. base_seed + replications - 1 must be unsigned 64-bit")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must lie in (0, 1)")
        for T, h in self.grid:
            grid_size(T, h)
        model = get_model(self.model)
        model.check(np.asarray(self.theta0))
        self.make_driver()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - _KNOWN_KEYS
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        missing = {"model", "theta0", "driver", "grid", "u"} - set(data)
        if missing:
            raise ValueError(f"missing config key(s): {', '.join(sorted(missing))}")
        return cls(**data)

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def make_driver(self) -> LevyDriver:
        return make_driver(self.driver, delta=self.delta, rate=self.rate)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["theta0"] = list(self.theta0)
        out["grid"] = [list(r) for r in self.grid]
        out["u"] = list(self.u)
        return {k: v for k, v in out.items() if v is not None}

    def plan(self) -> list[dict]:
        """Human-readable description of the work the study would do."""
        return [
            {"T": T, "h": h, "n": grid_size(T, h), "replications": self.replications,
             "seeds": [self.base_seed, self.base_seed + self.replications - 1],
             "fine_steps_per_path": grid_size(T, h) * self.fine_factor}
            for T, h in self.grid
        ]


def grid_size(T: float, h: float) -> int:
    if not (T > 0 and h > 0):
        raise ValueError("T and h must be positive")
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) >= 1e-9:
        raise ValueError(f"T={T} is not an integer multiple of h={h}")
    return n


@dataclass
class ReplicationRecord:
    rep_index: int
    seed: int
    T: float
    h: float
    converged: bool
    theta_hat: list = field(default_factory=list)
    kappa_hat: list = field(default_factory=list)
    studentized: list = field(default_factory=list)
    ci_covered: list = field(default_factory=list)
    std_error: list = field(default_factory=list)
    u_true: list = field(default_factory=list)
    bias_term: list = field(default_factory=list)
    expansion_gap: list = field(default_factory=list)
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.converged and not self.error


def _plan_for(config: ExperimentConfig, T: float, h: float) -> SimulationPlan:
    return SimulationPlan(
        model=get_model(config.model), theta0=np.asarray(config.theta0), driver=config.make_driver(),
        n=grid_size(T, h), h=h, fine_factor=config.fine_factor, x0=config.x0, seed=config.base_seed,
    )


def analyze_path(config: ExperimentConfig, T: float, h: float, rep_index: int,
                 values: np.ndarray, driver_increments: np.ndarray) -> ReplicationRecord:
    """Fit and infer on one simulated path; any failure lands in the record."""
    seed = config.base_seed + rep_index
    rec = ReplicationRecord(rep_index, seed, T, h, converged=False)
    try:
        model = get_model(config.model)
        driver = config.make_driver()
        phi = builtin_phi_cos(config.u)
        obs = ObservationSeries(h, values)
        fit = fit_gqmle(model, obs)
        rec.converged = fit.converged
        rec.theta_hat = fit.theta_hat.tolist()
        if not fit.converged:
            rec.error = f"GQMLE not converged (|G|={fit.objective:.3g}, boundary={fit.on_boundary})"
            return rec
        jf = joint_fit(model, obs, phi, level=config.ci_level, gqmle=fit)
        kappa = np.asarray(driver.cumulant(np.asarray(config.u)))
        theta0 = np.asarray(config.theta0)
        root = np.sqrt(jf.nh)
        u_hat = root * (jf.nu_hat - kappa)
        v_hat = root * (jf.theta_hat - theta0)
        u_true = root * (phi(driver_increments).sum(axis=0) / jf.nh - kappa)
        w_hat = v_hat[model.p_alpha:]
        bias = jf.b_hat @ w_hat
        truth = np.concatenate([kappa, theta0])
        rec.kappa_hat = jf.nu_hat.tolist()
        rec.studentized = studentize(u_hat, v_hat, jf.sigma_hat, jf.gamma_hat).tolist()
        rec.ci_covered = [bool(iv.lower <= t <= iv.upper) for iv, t in zip(jf.ci, truth)]
        rec.std_error = np.sqrt(np.diag(jf.joint_cov) / jf.nh).tolist()
        rec.u_true = u_true.tolist()
        rec.bias_term = bias.tolist()
        rec.expansion_gap = (u_hat - u_true - bias).tolist()
    except (LevySDEError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        rec.converged = False
    return rec


def _run_batch(config: ExperimentConfig, T: float, h: float, indices: Sequence[int]) -> list[ReplicationRecord]:
    plan = _plan_for(config, T, h)
    seeds = [config.base_seed + i for i in indices]
    try:
        values, coarse = simulate_paths(plan, seeds)
    except (LevySDEError, ValueError, FloatingPointError):
        if len(indices) == 1:
            return [_simulation_failure(config, T, h, indices[0])]
        # isolate the offending path(s)
        return [r for i in indices for r in _run_batch(config, T, h, [i])]
    return [analyze_path(config, T, h, i, values[k], coarse[k]) for k, i in enumerate(indices)]


def _simulation_failure(config, T, h, rep_index) -> ReplicationRecord:
    plan = _plan_for(config, T, h)
    try:
        simulate_paths(plan, [config.base_seed + rep_index])
        msg = "simulation failed"
    except (LevySDEError, ValueError, FloatingPointError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
    return ReplicationRecord(rep_index, config.base_seed + rep_index, T, h, converged=False, error=msg)


def run_replication(config: ExperimentConfig, row: tuple[float, float], rep_index: int) -> ReplicationRecord:
    """One replication of grid row ``row = (T, h)`` with seed ``base_seed + rep_index``."""
    T, h = float(row[0]), float(row[1])
    if not 0 <= rep_index:
        raise ValueError("rep_index must be non-negative")
    return _run_batch(config, T, h, [rep_index])[0]


def _batches(config: ExperimentConfig, T: float, h: float) -> list[list[int]]:
    size = max(1, BATCH_INCREMENTS // (grid_size(T, h) * config.fine_factor))
    idx = list(range(config.replications))
    return [idx[i:i + size] for i in range(0, len(idx), size)]


def collect_records(config: ExperimentConfig, row: tuple[float, float],
                    workers: Optional[int] = None) -> list[ReplicationRecord]:
    T, h = float(row[0]), float(row[1])
    workers = config.workers if workers is None else int(workers)
    batches = _batches(config, T, h)
    if workers > 1 and len(batches) > 1:
        # finer batches so every worker gets something to do
        per = max(1, -(-config.replications // (4 * workers)))
        per = min(per, len(batches[0]))
        idx = list(range(config.replications))
        batches = [idx[i:i + per] for i in range(0, len(idx), per)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_batch, *zip(*[(config, T, h, b) for b in batches]))
            records = [r for part in parts for r in part]
    else:
        records = [r for b in batches for r in _run_batch(config, T, h, b)]
    return sorted(records, key=lambda r: r.rep_index)


@dataclass(frozen=True)
class SummaryRow:
    T: float
    h: float
    n: int
    replications: int
    failures: int
    failed_indices: tuple[int, ...]
    mean: dict
    sd: dict


@dataclass(frozen=True)
class SummaryTable:
    columns: tuple[str, ...]
    rows: tuple[SummaryRow, ...]
    config: dict = field(default_factory=dict)

    def row(self, T: float, h: float) -> SummaryRow:
        for r in self.rows:
            if abs(r.T - T) < 1e-12 and abs(r.h - h) < 1e-12:
                return r
        raise KeyError((T, h))


def _sd(values: list[float]) -> float:
    return statistics.stdev(values) if len(values) > 1 else 0.0


def summarize(config: ExperimentConfig, records_by_row: dict) -> SummaryTable:
    model = get_model(config.model)
    columns = tuple(model.param_names()) + tuple(builtin_phi_cos(config.u).labels)
    rows = []
    for (T, h), records in records_by_row.items():
        good = [r for r in records if r.ok]
        failed = tuple(r.rep_index for r in records if not r.ok)
        mean, sd = {}, {}
        for k, name in enumerate(columns):
            vals = [float((r.theta_hat + r.kappa_hat)[k]) for r in good]
            mean[name] = statistics.fmean(vals) if vals else float("nan")
            sd[name] = _sd(vals) if vals else float("nan")
        rows.append(SummaryRow(T, h, grid_size(T, h), len(records), len(failed), failed, mean, sd))
    return SummaryTable(columns, tuple(rows), config.to_dict())


def run_study(config: ExperimentConfig, workers: Optional[int] = None, *,
              return_records: bool = False):
    """Run every grid row and aggregate mean / sd over successful replications.

    Raises
    ------
    StudyFailedError
        More than 20% of the replications of some row failed.
    """
    by_row = {}
    for T, h in config.grid:
        records = collect_records(config, (T, h), workers)
        failed = [r.rep_index for r in records if not r.ok]
        log.info("row T=%g h=%g: %d/%d replications failed", T, h, len(failed), len(records))
        if len(failed) > FAILURE_CAP * len(records):
            reasons = sorted({r.error for r in records if not r.ok})
            raise StudyFailedError(
                f"{len(failed)} of {len(records)} replications failed at T={T}, h={h}: "
                + "; ".join(reasons[:3])
            )
        by_row[(T, h)] = records
    table = summarize(config, by_row)
    if return_records:
        return table, by_row
    return table


def emit_table(table: SummaryTable, fmt: str) -> str:
    if not table.rows:
        raise ValueError("cannot emit an empty table")
    if fmt == "csv":
        return _table_csv(table)
    if fmt == "markdown":
        return _table_markdown(table)
    if fmt == "json":
        return json.dumps(table_to_json(table), indent=2) + "\n"
    raise ValueError(f"unknown table format {fmt!r}; choose csv, markdown or json")


def table_to_json(table: SummaryTable) -> dict:
    return {
        "columns": list(table.columns),
        "rows": [
            {"T": r.T, "h": r.h, "n": r.n, "replications": r.replications, "failures": r.failures,
             "failed_indices": list(r.failed_indices),
             "mean": {c: r.mean[c] for c in table.columns}, "sd": {c: r.sd[c] for c in table.columns}}
            for r in table.rows
        ],
        "config": table.config,
    }


def _table_csv(table: SummaryTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["T", "h", "n", "replications", "failures"]
    for c in table.columns:
        head += [f"mean_{c}", f"sd_{c}"]
    w.writerow(head)
    for r in table.rows:
        line = [f"{r.T:.17g}", f"{r.h:.17g}", r.n, r.replications, r.failures]
        for c in table.columns:
            line += [f"{r.mean[c]:.17g}", f"{r.sd[c]:.17g}"]
        w.writerow(line)
    return buf.getvalue()


def read_table_csv(text: str) -> list[dict]:
    """Parse :func:`emit_table` CSV output back into floats keyed by header."""
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


def _table_markdown(table: SummaryTable) -> str:
    head = "| T | h | " + " | ".join(table.columns) + " |"
    rule = "|" + "---|" * (len(table.columns) + 2)
    lines = [head, rule]
    for r in table.rows:
        cells = [f"{r.mean[c]:.4f} ({r.sd[c]:.4f})" for c in table.columns]
        lines.append(f"| {r.T:g} | {r.h:g} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


RECORD_FIELDS = ("rep_index", "seed", "T", "h", "converged", "theta_hat", "kappa_hat",
                 "studentized", "ci_covered", "std_error", "u_true", "bias_term", "expansion_gap", "error")


def records_to_csv(records: Sequence[ReplicationRecord]) -> str:
    """Per-replication CSV; vector fields are space-separated at 17 digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        line = []
        for name in RECORD_FIELDS:
            v = getattr(r, name)
            if isinstance(v, list):
                v = " ".join(f"{x:.17g}" if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = f"{v:.17g}"
            line.append(v)
        w.writerow(line)
    return buf.getvalue()


def write_study_outputs(table: SummaryTable, records_by_row: dict, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt, suffix in (("csv", "csv"), ("markdown", "md"), ("json", "json")):
        p = outdir / f"table.{suffix}"
        p.write_text(emit_table(table, fmt))
        written.append(p)
    p = outdir / "records.csv"
    p.write_text(records_to_csv([r for recs in records_by_row.values() for r in recs]))
    written.append(p)
    return written


def bundled_config_path(name: str) -> Path:
    """Path of a config shipped with the package (``table1``, ``table2``, ``table3``)."""
    stem = name[:-5] if name.endswith(".toml") else name
    p = Path(__file__).parent / "configs" / f"{stem}.toml"
    if not p.is_file():
        raise FileNotFoundError(f"no bundled config named {name!r}")
    return p
