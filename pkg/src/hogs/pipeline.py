"""End-to-end experiment orchestration: collect, synthesize, train, report."""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
import statistics
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .collection import run_collection
from .errors import ConfigError, HogsError, PhaseError
from .features import kprop_aggregate, reconstruct_features
from .gcn import TrainConfig, fit_and_score
from .graph import GraphDataset, load_dataset, split_nodes
from .ldp import DegenerateBudgetWarning, split_budget
from .topology import DEFAULT_BLOCK_ROWS, SyntheticTopology, raw_noisy_topology, reconstruct_topology

VARIANTS = ("hogs", "no_tr", "no_fr", "kprop_k1", "kprop_k2", "nonprivate")
PHASES = ("collect", "topology", "features", "train")


@dataclass
class ExperimentConfig:
    """One pipeline configuration.

    ``public_features`` puts the whole budget on adjacency lists and lets
    the curator use the true features (``delta`` is forced to 0).
    """

    features_path: str | None = None
    edges_path: str | None = None
    labels_path: str | None = None
    epsilon: float = 4.0
    delta: float = 0.5
    tau: float = 0.5
    l: int = 1
    variant: str = "hogs"
    gnn: TrainConfig = field(default_factory=TrainConfig)
    repeats: int = 10
    master_seed: int = 0
    split_ratios: tuple = (0.5, 0.25, 0.25)
    public_features: bool = False
    block_rows: int = DEFAULT_BLOCK_ROWS

    def __post_init__(self):
        if self.public_features:
            self.delta = 0.0
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.variant != "nonprivate" and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must lie in [0, 1], got {self.delta}")
        if self.l < 0:
            raise ConfigError("l must be non-negative")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")

    def replace(self, **changes) -> ExperimentConfig:
        gnn_keys = {f.name for f in dataclasses.fields(TrainConfig)}
        gnn_changes = {k: changes.pop(k) for k in list(changes) if k in gnn_keys}
        cfg = dataclasses.replace(self, **changes)
        if gnn_changes:
            cfg.gnn = dataclasses.replace(cfg.gnn, **gnn_changes)
        return cfg

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        return d

    @classmethod
    def from_json(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        gnn = TrainConfig(**d.pop("gnn", {}))
        if "split_ratios" in d:
            d["split_ratios"] = tuple(d["split_ratios"])
        return cls(gnn=gnn, **d)


@dataclass
class RepeatResult:
    seed: int
    test_acc: float
    val_acc: float
    edges: int
    homophily: float | None
    mean_degree: float
    timings_ms: dict


@dataclass
class RunReport:
    config: ExperimentConfig
    repeats: list

    @property
    def accuracies(self) -> list[float]:
        return [r.test_acc for r in self.repeats]

    @property
    def val_accuracies(self) -> list[float]:
        return [r.val_acc for r in self.repeats]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.accuracies)

    @property
    def std(self) -> float:
        accs = self.accuracies
        return statistics.stdev(accs) if len(accs) > 1 else 0.0

    @property
    def mean_val(self) -> float:
        return statistics.fmean(self.val_accuracies)

    def to_json(self) -> dict:
        homs = [r.homophily for r in self.repeats if r.homophily is not None]
        return {
            "config": self.config.to_json(),
            "accuracies": self.accuracies,
            "mean": self.mean,
            "std": self.std,
            "val_accuracies": self.val_accuracies,
            "graph_stats": {
                "edges": int(round(statistics.fmean(r.edges for r in self.repeats))),
                "homophily": statistics.fmean(homs) if homs else None,
                "mean_degree": statistics.fmean(r.mean_degree for r in self.repeats),
            },
            "timings_ms": {p: math.fsum(r.timings_ms[p] for r in self.repeats) for p in PHASES},
            "total_ms": math.fsum(r.timings_ms["total"] for r in self.repeats),
        }


def edge_homophily(topology, labels, labeled=None) -> float | None:
    """Fraction of edges whose endpoints share a label.

    Edges touching a node outside ``labeled`` (a boolean mask) are ignored.
    Returns ``None`` when no edge is eligible.
    """
    edges = np.asarray(getattr(topology, "edges", topology), dtype=np.int64).reshape(-1, 2)
    labels = np.asarray(labels)
    if labeled is not None:
        labeled = np.asarray(labeled, dtype=bool)
        edges = edges[labeled[edges[:, 0]] & labeled[edges[:, 1]]]
    if edges.shape[0] == 0:
        return None
    return float(np.mean(labels[edges[:, 0]] == labels[edges[:, 1]]))


def load_config_dataset(cfg: ExperimentConfig) -> GraphDataset:
    if not (cfg.features_path and cfg.edges_path and cfg.labels_path):
        raise ConfigError("features, edges and labels paths are required")
    return load_dataset(cfg.features_path, cfg.edges_path, cfg.labels_path)


class _Phase:
    def __init__(self, name, timings):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = (time.perf_counter() - self.t0) * 1000.0
        if exc is not None and not isinstance(exc, PhaseError) and isinstance(exc, (HogsError, ValueError, ArithmeticError)):
            raise PhaseError(self.name, exc) from exc
        return False


def synthesize(ds: GraphDataset, cfg: ExperimentConfig, seed: int, timings=None):
    """Produce ``(topology, features)`` for one repeat according to ``cfg.variant``."""
    timings = {} if timings is None else timings
    if cfg.variant == "nonprivate":
        for p in ("collect", "topology", "features"):
            timings[p] = 0.0
        return SyntheticTopology(ds.node_count, ds.edges.copy()), ds.features.copy()

    with _Phase("collect", timings):
        delta = 0.0 if cfg.public_features else cfg.delta
        with warnings.catch_warnings():
            if cfg.public_features:
                warnings.simplefilter("ignore", DegenerateBudgetWarning)
            budget = split_budget(cfg.epsilon, delta)
        rnd = run_collection(ds, budget, seed)

    with _Phase("topology", timings):
        public = ds.features if cfg.public_features else None
        topo, posteriors = reconstruct_topology(rnd, cfg.tau, features=public, block_rows=cfg.block_rows)
        if cfg.variant == "no_tr":
            topo = raw_noisy_topology(rnd)

    with _Phase("features", timings):
        base = ds.features if cfg.public_features else rnd.noisy_feature_matrix()
        if cfg.variant in ("hogs", "no_tr"):
            feats = reconstruct_features(posteriors, base, cfg.l).matrix
        elif cfg.variant == "no_fr":
            feats = np.asarray(base, dtype=np.float64)
        else:
            feats = kprop_aggregate(topo, base, int(cfg.variant[-1]))
    return topo, feats


def run_repeat(ds: GraphDataset, cfg: ExperimentConfig, repeat: int) -> RepeatResult:
    seed = cfg.master_seed + repeat
    timings = {}
    t0 = time.perf_counter()
    topo, feats = synthesize(ds, cfg, seed, timings)
    split = split_nodes(ds, cfg.split_ratios, seed)
    with _Phase("train", timings):
        gnn = dataclasses.replace(cfg.gnn, seed=seed)
        _, metrics = fit_and_score(topo, feats, ds.labels, split, gnn, ds.class_count)
    timings["total"] = (time.perf_counter() - t0) * 1000.0
    return RepeatResult(
        seed=seed,
        test_acc=metrics.test_acc,
        val_acc=metrics.best_val_acc,
        edges=topo.edge_count,
        homophily=edge_homophily(topo, ds.labels),
        mean_degree=2.0 * topo.edge_count / ds.node_count,
        timings_ms=timings,
    )


def run_pipeline(cfg: ExperimentConfig, ds: GraphDataset | None = None) -> RunReport:
    """Run ``cfg.repeats`` independent repeats with seeds ``master_seed + r``."""
    cfg.validate()
    if ds is None:
        ds = load_config_dataset(cfg)
    return RunReport(cfg, [run_repeat(ds, cfg, r) for r in range(cfg.repeats)])


GRID_KEYS = ("delta", "tau", "l", "learning_rate", "weight_decay", "dropout")
_GRID_ALIASES = {"lr": "learning_rate"}


def _tie_key(cfg: ExperimentConfig):
    g = cfg.gnn
    return (cfg.delta, cfg.tau, cfg.l, g.dropout, g.learning_rate, g.weight_decay)


def grid_search(base: ExperimentConfig, grid: dict, ds: GraphDataset | None = None, repeats: int = 5,
                progress=None):
    """Exhaustive sweep scored by mean validation accuracy.

    Ties go to the smaller ``delta``, then ``tau``, then ``l``, then the
    remaining fields in name order.  Returns ``(best_config, table)`` where
    ``table`` has one dict per cell.
    """
    grid = {_GRID_ALIASES.get(k, k): list(v) for k, v in grid.items()}
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise ConfigError(f"cannot sweep {sorted(unknown)}; allowed keys are {GRID_KEYS}")
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid must name at least one key and every value list must be non-empty")
    if ds is None:
        ds = load_config_dataset(base)

    keys = sorted(grid)
    table, best, best_score = [], None, None
    for values in itertools.product(*(grid[k] for k in keys)):
        cell = base.replace(repeats=repeats, **dict(zip(keys, values)))
        report = run_pipeline(cell, ds)
        row = dict(zip(keys, values))
        row.update(mean_val=report.mean_val, mean_test=report.mean, std_test=report.std)
        table.append(row)
        if progress:
            progress(row)
        score = (-report.mean_val, _tie_key(cell))
        if best is None or score < best_score:
            best, best_score = cell, score
    return best.replace(repeats=base.repeats), table


def format_table(report_json: dict) -> str:
    cfg = report_json["config"]
    gs = report_json["graph_stats"]
    hom = "n/a" if gs["homophily"] is None else f"{gs['homophily']:.4f}"
    lines = [
        f"variant      {cfg['variant']}",
        f"epsilon      {cfg['epsilon']}",
        f"delta        {cfg['delta']}",
        f"tau          {cfg['tau']}",
        f"l            {cfg['l']}",
        f"repeats      {len(report_json['accuracies'])}",
        f"test acc     {report_json['mean']:.4f} +/- {report_json['std']:.4f}",
        f"edges        {gs['edges']}",
        f"homophily    {hom}",
        f"mean degree  {gs['mean_degree']:.3f}",
    ]
    lines += [f"time {p:<8}{report_json['timings_ms'][p]:10.1f} ms" for p in PHASES]
    return "\n".join(lines)


def emit_report(report, path, stream=sys.stdout) -> Path:
    """Write the report JSON to ``path`` and a plaintext summary to ``stream``."""
    doc = report.to_json() if isinstance(report, RunReport) else report
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    if stream is not None:
        print(format_table(doc), file=stream)
    return path
