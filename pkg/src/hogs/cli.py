"""Command line entry point.

Every subcommand accepts ``--config FILE``: a flat ``key = value`` text file
(``#`` starts a comment).  Keys are the long flag names with dashes or
underscores; flags given on the command line override the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path


from . import __version__
from .collection import read_report_stream, run_collection, write_report_stream
from .errors import ConfigError, HogsError
from .features import reconstruct_features
from .gcn import TrainConfig, fit_and_score
from .graph import (
    GraphDataset,
    _read_labels,
    dataset_paths,
    load_dataset,
    load_dataset_dir,
    make_dataset,
    save_dataset,
    split_nodes,
)
from .ldp import split_budget
from .pipeline import (
    GRID_KEYS,
    VARIANTS,
    ExperimentConfig,
    edge_homophily,
    emit_report,
    format_table,
    grid_search,
    run_pipeline,
)
from .topology import reconstruct_topology

log = logging.getLogger("hogs")

_FLOAT_KEYS = {"epsilon", "delta", "tau", "lr", "weight_decay", "dropout"}
_INT_KEYS = {"l", "seed", "repeats", "epochs", "patience", "hidden", "block_rows", "grid_repeats"}
_BOOL_KEYS = {"public_features"}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines into a dict with typed values."""
    out = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = _coerce(key.replace("-", "_"), value, f"{path}:{line_no}")
    return out


def _coerce(key, value, where):
    try:
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _INT_KEYS:
            return int(value)
        if key in _BOOL_KEYS:
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
    except ValueError:
        raise ConfigError(f"{where}: bad value {value!r} for {key}") from None
    return value


def _merged(args) -> dict:
    opts = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key, value in vars(args).items():
        if key in ("command", "config", "func") or value is None:
            continue
        opts[key] = value
    return opts


def _dataset(opts) -> GraphDataset:
    if opts.get("data"):
        return load_dataset_dir(opts["data"])
    try:
        return load_dataset(opts["features"], opts["edges"], opts["labels"])
    except KeyError as exc:
        raise ConfigError(f"no dataset given: pass --data DIR or --features/--edges/--labels ({exc} missing)") from None


def _train_config(opts) -> TrainConfig:
    base = TrainConfig()
    return TrainConfig(
        learning_rate=opts.get("lr", base.learning_rate),
        weight_decay=opts.get("weight_decay", base.weight_decay),
        dropout=opts.get("dropout", base.dropout),
        max_epochs=opts.get("epochs", base.max_epochs),
        patience=opts.get("patience", base.patience),
        seed=opts.get("seed", base.seed),
        hidden=opts.get("hidden", base.hidden),
        feature_norm=opts.get("feature_norm", base.feature_norm),
    )


def _experiment(opts) -> ExperimentConfig:
    base = ExperimentConfig()
    paths = {}
    if opts.get("data"):
        f, e, lab = dataset_paths(opts["data"])
        paths = {"features_path": str(f), "edges_path": str(e), "labels_path": str(lab)}
    else:
        paths = {"features_path": opts.get("features"), "edges_path": opts.get("edges"),
                 "labels_path": opts.get("labels")}
    return ExperimentConfig(
        **paths,
        epsilon=opts.get("epsilon", base.epsilon),
        delta=opts.get("delta", base.delta),
        tau=opts.get("tau", base.tau),
        l=opts.get("l", base.l),
        variant=opts.get("variant", base.variant),
        gnn=_train_config(opts),
        repeats=opts.get("repeats", base.repeats),
        master_seed=opts.get("seed", base.master_seed),
        public_features=opts.get("public_features", base.public_features),
        block_rows=opts.get("block_rows", base.block_rows),
    )


def _out_dir(opts, default) -> Path:
    out = Path(opts.get("out") or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(opts):
    ds = _dataset(opts)
    out = _out_dir(opts, "dataset")
    save_dataset(ds, out)
    print(f"{ds.node_count} nodes, {ds.edge_count} edges, {ds.feature_dim} features, "
          f"{ds.class_count} classes, range [{ds.feature_lo}, {ds.feature_hi}] -> {out}")


def cmd_collect(opts):
    ds = _dataset(opts)
    budget = split_budget(opts.get("epsilon", 4.0), opts.get("delta", 0.5))
    rnd = run_collection(ds, budget, opts.get("seed", 0))
    out = Path(opts.get("out") or "reports.bin")
    if out.is_dir():
        out = out / "reports.bin"
    write_report_stream(rnd, out)
    print(f"{rnd.n} reports (eps_a={budget.epsilon_adj:g}, eps_f={budget.epsilon_feat:g}) -> {out}")


def cmd_synthesize(opts):
    if not opts.get("reports"):
        raise ConfigError("--reports is required")
    rnd = read_report_stream(opts["reports"])
    tau, l = opts.get("tau", 0.5), opts.get("l", 1)
    topo, posteriors = reconstruct_topology(rnd, tau, block_rows=opts.get("block_rows", 256))
    feats = reconstruct_features(posteriors, rnd.noisy_feature_matrix(), l).matrix
    labels = _labels_for(opts, rnd.n)
    ds = make_dataset(topo.edges, feats, labels, feature_range=(0.0, 1.0))
    out = _out_dir(opts, "synthetic")
    meta = {"epsilon": rnd.budget.epsilon_total, "delta": rnd.budget.delta, "tau": tau, "l": l,
            "seed": rnd.master_seed}
    save_dataset(ds, out, sparse=False, meta=meta)
    posteriors.write(out / "posteriors.bin")
    print(f"{topo.edge_count} edges, {len(posteriors)} stored posteriors -> {out}")


def _labels_for(opts, n):
    if opts.get("data"):
        labels = load_dataset_dir(opts["data"]).labels
    elif opts.get("labels"):
        labels = _read_labels(opts["labels"])
    else:
        raise ConfigError("synthesize needs labels: pass --data DIR or --labels FILE")
    if labels.size != n:
        raise ConfigError(f"label file has {labels.size} nodes, reports cover {n}")
    return labels


def cmd_train(opts):
    graph = opts.get("graph") or opts.get("data")
    if not graph:
        raise ConfigError("--graph DIR is required")
    ds = load_dataset_dir(graph)
    cfg = _train_config(opts)
    split = split_nodes(ds, (0.5, 0.25, 0.25), cfg.seed)
    _, metrics = fit_and_score(ds.edges, ds.features, ds.labels, split, cfg, ds.class_count)
    doc = metrics.to_json()
    out = opts.get("out")
    if out:
        path = Path(out)
        if path.is_dir():
            path = path / "metrics.json"
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    hom = edge_homophily(ds.edges, ds.labels)
    print(json.dumps(doc))
    print(f"edge homophily {hom if hom is None else round(hom, 4)}")


def cmd_run(opts):
    cfg = _experiment(opts)
    ds = _dataset(opts)
    report = run_pipeline(cfg, ds)
    out = _out_dir(opts, "results")
    emit_report(report, out / f"report_{cfg.variant}.json")


def _parse_grid(opts) -> dict:
    grid = {}
    for key in GRID_KEYS + ("lr",):
        raw = opts.get(f"grid_{key}")
        if raw:
            grid[key] = [int(v) if key == "l" else float(v) for v in str(raw).split(",")]
    if not grid:
        raise ConfigError("empty grid: pass at least one --grid-<key> list, e.g. --grid-delta 0.1,0.3")
    return grid


def cmd_grid(opts):
    base = _experiment(opts)
    ds = _dataset(opts)
    grid = _parse_grid(opts)

    def progress(row):
        print(" ".join(f"{k}={v}" for k, v in row.items()), flush=True)

    best, table = grid_search(base, grid, ds, repeats=opts.get("grid_repeats", 5), progress=progress)
    out = _out_dir(opts, "results")
    doc = {"grid": grid, "best": best.to_json(), "table": table}
    (out / "grid.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print("best:", {k: getattr(best, k, getattr(best.gnn, k, None)) for k in ("delta", "tau", "l")})
    if opts.get("final", True):
        emit_report(run_pipeline(best, ds), out / f"report_{best.variant}.json")


def cmd_report(opts):
    doc = json.loads(Path(opts["path"]).read_text(encoding="utf-8"))
    if "table" in doc:
        for row in doc["table"]:
            print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
        print("best:", json.dumps({k: doc["best"][k] for k in ("delta", "tau", "l")}))
    else:
        print(format_table(doc))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hogs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--out")
        if data:
            sp.add_argument("--data", help="dataset directory (edges.tsv, labels.tsv, features.csv|tsv)")
            sp.add_argument("--features")
            sp.add_argument("--edges")
            sp.add_argument("--labels")

    def privacy(sp):
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--delta", type=float)
        sp.add_argument("--seed", type=int)

    def gnn(sp):
        sp.add_argument("--lr", type=float)
        sp.add_argument("--weight-decay", dest="weight_decay", type=float)
        sp.add_argument("--dropout", type=float)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--patience", type=int)
        sp.add_argument("--hidden", type=int)
        sp.add_argument("--feature-norm", dest="feature_norm", choices=("none", "center", "row"))

    def synthesis(sp):
        sp.add_argument("--tau", type=float)
        sp.add_argument("--l", type=int)
        sp.add_argument("--block-rows", dest="block_rows", type=int)

    sp = sub.add_parser("ingest", help="validate a dataset and write it in canonical form")
    common(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("collect", help="simulate clients and write the report stream")
    common(sp)
    privacy(sp)
    sp.set_defaults(func=cmd_collect)

    sp = sub.add_parser("synthesize", help="report stream -> synthetic graph files")
    common(sp)
    synthesis(sp)
    sp.add_argument("--reports")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("train", help="train and score a GCN on graph files")
    common(sp, data=False)
    sp.add_argument("--graph")
    sp.add_argument("--seed", type=int)
    gnn(sp)
    sp.set_defaults(func=cmd_train)

    for name, func, helptext in (("run", cmd_run, "full pipeline with repeats"),
                                 ("grid", cmd_grid, "grid search on validation accuracy")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        privacy(sp)
        synthesis(sp)
        gnn(sp)
        sp.add_argument("--variant", choices=VARIANTS)
        sp.add_argument("--repeats", type=int)
        sp.add_argument("--public-features", dest="public_features", action="store_const", const=True)
        if name == "grid":
            for key in GRID_KEYS:
                sp.add_argument(f"--grid-{key.replace('_', '-')}", dest=f"grid_{key}",
                                help=f"comma-separated values for {key}")
            sp.add_argument("--grid-repeats", dest="grid_repeats", type=int)
            sp.add_argument("--no-final", dest="final", action="store_const", const=False,
                            help="skip the final run with the selected configuration")
        sp.set_defaults(func=func)

    sp = sub.add_parser("report", help="pretty-print a report or grid JSON file")
    sp.add_argument("path")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    opts = _merged(args)
    opts.pop("verbose", None)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            args.func(opts)
    except HogsError as exc:
        print(f"hogs: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
