"""Experiment runner: repeated-split training runs, depth sweeps, embedding export, theory checks.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure, 3 theory-check failure.
Settings resolve as command-line flag > JSON config file > default; the output
directory can additionally be overridden by ``DGAE_OUTPUT_DIR``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .evaluation import EdgeSplit, RunRecord, aggregate, evaluate, split_edges
from .graph import Graph, featureless, load_dataset, normalize_adjacency
from .models import ModelConfig, Variant, build, encode, load_checkpoint, save_checkpoint
from .spectral import closed_form_two_layer, random_linear_model, theory_suite, walk_collapse
from .synthetic import erdos_renyi, path_graph, star_graph
from .training import LossConfig, TrainConfig, train

log = logging.getLogger("dgae")

OUTPUT_ENV = "DGAE_OUTPUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_THEORY = 0, 1, 2, 3

# published node / edge / feature counts, for `info`
REFERENCE_STATS = {
    "cora": (2708, 5429, 1433),
    "citeseer": (3327, 4732, 3703),
    "pubmed": (19717, 44338, 500),
    "chameleon": (2277, 36101, 2325),
    "texas": (183, 309, 1703),
    "wisconsin": (251, 499, 1703),
}


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    edges: str | None = None
    features: str | None = None
    dataset_name: str | None = None
    featureless: bool = False
    variant: str = "GAE"
    k: int = 2
    hidden_dim: int = 32
    latent_dim: int = 16
    dropout: float = 0.0
    ae_activation: str = "relu"
    epochs: int = 200
    lr: float = 0.01
    eval_every: int = 10
    selection: str = "final_epoch"
    loss_form: str = "weighted_bce"
    block_threshold: int = 5000
    lambda0: float = 1.0
    lambda_ae: list[float] | None = None
    kl_weight: float | None = None
    n_runs: int = 10
    base_seed: int = 0
    output_dir: str = "results"
    workers: int = 0
    save_checkpoints: bool = False
    k_list: list[int] = field(default_factory=list)

    def validate(self, need_data: bool = True) -> None:
        if need_data:
            if not self.edges:
                raise UsageError("an edge file is required (--edges or 'edges' in the config)")
            for path in (self.edges, self.features):
                if path and not Path(path).exists():
                    raise UsageError(f"no such file: {path}")
        if self.n_runs < 1:
            raise UsageError(f"n_runs must be >= 1, got {self.n_runs}")
        try:
            Variant(self.variant)
        except ValueError:
            raise UsageError(f"unknown variant {self.variant!r}; choose from {[v.value for v in Variant]}") from None
        try:
            self.model_config()
            self.train_config(0)
            self.loss_config()
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    @property
    def name(self) -> str:
        if self.dataset_name:
            return self.dataset_name
        return Path(self.edges).stem.split(".")[0] if self.edges else "dataset"

    def model_config(self, k: int | None = None) -> ModelConfig:
        return ModelConfig(variant=self.variant, k=self.k if k is None else k, hidden_dim=self.hidden_dim,
                           latent_dim=self.latent_dim, dropout_rate=self.dropout,
                           ae_encoder_activation=self.ae_activation)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, seed=seed, eval_every=self.eval_every,
                           selection=self.selection, loss_form=self.loss_form,
                           block_threshold=self.block_threshold)

    def loss_config(self) -> LossConfig:
        return LossConfig(lambda0=self.lambda0, lambda_ae=self.lambda_ae, kl_weight=self.kl_weight)

    def load_graph(self) -> Graph:
        graph = load_dataset(self.edges, self.features)
        return featureless(graph) if self.featureless else graph


def _fmt(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# single run


@dataclass
class RunResult:
    run: int
    seed: int
    auc: float = float("nan")
    ap: float = float("nan")
    status: str = "ok"
    error: str = ""


def _model_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1]))


def execute_run(cfg: ExperimentConfig, graph: Graph, run: int, k: int, out_dir: Path) -> RunResult:
    """Split with ``base_seed + run``, build, train and score on the test part."""
    seed = cfg.base_seed + run
    try:
        split = split_edges(graph, seed=seed)
        model = build(cfg.model_config(k), graph.m, graph.n, _model_rng(seed))
        model, history = train(model, graph, split, cfg.loss_config(), cfg.train_config(seed))
        adj = normalize_adjacency(graph.with_edges(split.train_edges))
        z = encode(model, adj, graph.features).embedding
        auc_value, ap_value = evaluate(z, split, "test")
        history.to_csv(out_dir / f"history_run{run}.csv")
        if cfg.save_checkpoints:
            meta = {"split_seed": seed, "dataset": cfg.name, "featureless": cfg.featureless}
            save_checkpoint(model, out_dir / f"model_run{run}.npz", meta)
        return RunResult(run, seed, auc_value, ap_value)
    except Exception as exc:  # recorded per run, summary marked incomplete
        log.error("run %d failed: %s", run, exc)
        log.debug("%s", traceback.format_exc())
        return RunResult(run, seed, status="failed", error=f"{type(exc).__name__}: {exc}")


def _execute_run_star(args):
    return execute_run(*args)


def _workers(cfg: ExperimentConfig) -> int:
    return cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)


def run_experiment(cfg: ExperimentConfig, graph: Graph, k: int, out_dir: Path) -> list[RunResult]:
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, graph, r, k, out_dir) for r in range(cfg.n_runs)]
    workers = min(_workers(cfg), len(jobs))
    if workers <= 1:
        results = [execute_run(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute_run_star, jobs))
    return sorted(results, key=lambda r: r.run)


RUN_COLUMNS = ("run", "seed", "auc", "ap", "status", "error")
SUMMARY_COLUMNS = ("dataset", "variant", "k", "n_runs", "n_ok", "auc_mean", "auc_std", "ap_mean", "ap_std",
                   "single_run", "complete")


def write_run_files(cfg: ExperimentConfig, k: int, results: list[RunResult], out_dir: Path,
                    timestamp: bool = False) -> bool:
    """Write ``runs.csv`` and ``summary.csv``; return True when every run succeeded."""
    with open(out_dir / "runs.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUN_COLUMNS)
        for r in results:
            writer.writerow([r.run, r.seed, _fmt(r.auc), _fmt(r.ap), r.status, r.error])
    ok = [r for r in results if r.status == "ok"]
    complete = len(ok) == len(results)
    with open(out_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        if timestamp:
            fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        if ok:
            agg = aggregate([RunRecord(r.seed, r.auc, r.ap) for r in ok])
            stats = [_fmt(agg.auc_mean), _fmt(agg.auc_std), _fmt(agg.ap_mean), _fmt(agg.ap_std), agg.single_run]
        else:
            stats = ["nan", "nan", "nan", "nan", False]
        writer.writerow([cfg.name, cfg.variant, k, len(results), len(ok), *stats, complete])
    return complete


# --------------------------------------------------------------------------
# subcommands


def cmd_run(cfg: ExperimentConfig, timestamp: bool = False) -> int:
    cfg.validate()
    graph = cfg.load_graph()
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    results = run_experiment(cfg, graph, cfg.k, out_dir)
    complete = write_run_files(cfg, cfg.k, results, out_dir, timestamp)
    return EXIT_OK if complete else EXIT_RUNTIME


SWEEP_COLUMNS = ("dataset", "variant", "k", "run", "auc", "ap")


def cmd_sweep(cfg: ExperimentConfig, k_list=None, timestamp: bool = False) -> int:
    k_list = list(k_list if k_list is not None else cfg.k_list)
    if not k_list:
        raise UsageError("sweep needs a non-empty k list (--k-list 1,2,6)")
    cfg.validate()
    for k in k_list:
        try:
            cfg.model_config(k)
        except ValueError as exc:
            raise UsageError(f"k={k}: {exc}") from None
    graph = cfg.load_graph()
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    all_complete = True
    with open(root / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for k in k_list:
            cell = root / f"k{k}"
            results = run_experiment(cfg, graph, k, cell)
            all_complete &= write_run_files(cfg, k, results, cell, timestamp)
            for r in results:
                writer.writerow([cfg.name, cfg.variant, k, r.run, _fmt(r.auc), _fmt(r.ap)])
            fh.flush()
    return EXIT_OK if all_complete else EXIT_RUNTIME


def cmd_export_embeddings(checkpoint, cfg: ExperimentConfig, out_path) -> int:
    """Write node embeddings (``mu`` for variational models) as an n x h TSV.

    The adjacency is rebuilt from the checkpoint's training split when the
    checkpoint records one, otherwise from the full edge set.
    """
    cfg.validate()
    model, meta = load_checkpoint(checkpoint)
    graph = load_dataset(cfg.edges, cfg.features)
    if cfg.featureless or meta.get("featureless"):
        graph = featureless(graph)
    if graph.m != model.m:
        raise ValueError(f"dataset has {graph.m} features, checkpoint expects {model.m}")
    edges = graph.edges
    if meta.get("split_seed") is not None:
        edges = split_edges(graph, seed=int(meta["split_seed"])).train_edges
    adj = normalize_adjacency(graph.with_edges(edges))
    z = encode(model, adj, graph.features).embedding
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for row in z:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")
    return EXIT_OK


def cmd_split(cfg: ExperimentConfig, out_dir) -> int:
    cfg.validate()
    graph = cfg.load_graph()
    split = split_edges(graph, seed=cfg.base_seed)
    split.save(out_dir)
    print(f"train={len(split.train_edges)} val={len(split.val_pos)} test={len(split.test_pos)} -> {out_dir}")
    return EXIT_OK


def cmd_info(cfg: ExperimentConfig) -> int:
    cfg.validate()
    graph = load_dataset(cfg.edges, cfg.features)
    lines = [
        f"dataset          {cfg.name}",
        f"nodes            {graph.n}",
        f"edge lines       {graph.raw_edge_lines}",
        f"undirected edges {graph.num_edges}",
        f"features         {graph.m}{' (featureless: identity)' if cfg.features is None else ''}",
        f"isolated nodes   {int(np.sum(graph.degrees() == 0))}",
    ]
    ref = REFERENCE_STATS.get(cfg.name.lower())
    if ref:
        lines.append(f"reference        nodes={ref[0]} edges={ref[1]} features={ref[2]}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_verify_theory(out_dir, k_min: int = 2, k_max: int = 8, n_graphs: int = 10, n: int = 20,
                      edge_prob: float = 0.2, seed: int = 0, tol: float = 1e-10, walk_k_max: int = 50) -> int:
    """Expansion checks for every k, the two-layer closed form, and walk dispersion CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    worst: dict[int, float] = {}
    with open(out_dir / "expansion_detail.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("k", "graph", "max_abs_err", "pass"))
        for k, gi, rep in theory_suite(range(k_min, k_max + 1), n_graphs, n, edge_prob, seed=seed, tol=tol):
            writer.writerow((k, gi, _fmt(rep.max_abs_err), rep.passed))
            worst[k] = max(worst.get(k, 0.0), rep.max_abs_err)
    ok = True
    with open(out_dir / "expansion.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("k", "max_abs_err", "pass"))
        for k in sorted(worst):
            writer.writerow((k, _fmt(worst[k]), worst[k] <= tol))
            ok &= worst[k] <= tol

    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 6))
    graph = erdos_renyi(n, edge_prob, seed=seed, features=x)
    adj = normalize_adjacency(graph)
    model = random_linear_model(2, 6, rng, random_biases=False)
    z = encode(model, adj, x).z.value
    err = float(np.max(np.abs(z - closed_form_two_layer(model, adj, x))))
    with open(out_dir / "closed_form.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("k", "max_abs_err", "pass"))
        writer.writerow((2, _fmt(err), err <= tol))
    ok &= err <= tol

    walks = {"K2": path_graph(2), "P3": path_graph(3), "S5": star_graph(5), "ER20": erdos_renyi(n, edge_prob, seed=seed)}
    for name, g in walks.items():
        with open(out_dir / f"walk_{name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("k", "dispersion"))
            for k, disp in walk_collapse(g, walk_k_max):
                writer.writerow((k, _fmt(disp)))
    print(f"expansion k={k_min}..{k_max}: {'pass' if ok else 'FAIL'} (worst {max(worst.values()):.3g}); "
          f"closed form err {err:.3g}")
    return EXIT_OK if ok else EXIT_THEORY


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# flag -> (config field, argparse kwargs)
_EXPERIMENT_FLAGS = {
    "--edges": ("edges", {}),
    "--features": ("features", {}),
    "--dataset-name": ("dataset_name", {}),
    "--variant": ("variant", {}),
    "--k": ("k", {"type": int}),
    "--hidden-dim": ("hidden_dim", {"type": int}),
    "--latent-dim": ("latent_dim", {"type": int}),
    "--dropout": ("dropout", {"type": float}),
    "--ae-activation": ("ae_activation", {"choices": ["relu", "linear"]}),
    "--epochs": ("epochs", {"type": int}),
    "--lr": ("lr", {"type": float}),
    "--eval-every": ("eval_every", {"type": int}),
    "--selection": ("selection", {"choices": ["final_epoch", "best_validation_auc"]}),
    "--loss-form": ("loss_form", {"choices": ["weighted_bce", "literal"]}),
    "--block-threshold": ("block_threshold", {"type": int}),
    "--lambda0": ("lambda0", {"type": float}),
    "--lambda-ae": ("lambda_ae", {"type": _float_list}),
    "--kl-weight": ("kl_weight", {"type": float}),
    "--n-runs": ("n_runs", {"type": int}),
    "--seed": ("base_seed", {"type": int}),
    "--out": ("output_dir", {}),
    "--workers": ("workers", {"type": int}),
    "--k-list": ("k_list", {"type": _int_list}),
}


def _add_experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with experiment settings")
    for flag, (dest, kwargs) in _EXPERIMENT_FLAGS.items():
        p.add_argument(flag, dest=dest, default=None, **kwargs)
    p.add_argument("--featureless", dest="featureless", action="store_true", default=None,
                   help="replace node features by the identity")
    p.add_argument("--save-checkpoints", dest="save_checkpoints", action="store_true", default=None)
    p.add_argument("--timestamp", action="store_true", help="prefix summary files with a generation time")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dgae", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _add_experiment_args(sub.add_parser("run", help="train and test over n_runs random splits"))
    _add_experiment_args(sub.add_parser("sweep", help="cmd_run for each depth in --k-list"))
    p = sub.add_parser("export-embeddings", help="write n x h embedding TSV from a checkpoint")
    _add_experiment_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", required=True, help="TSV path")
    p = sub.add_parser("split", help="materialize an edge split as TSV files")
    _add_experiment_args(p)
    _add_experiment_args(sub.add_parser("info", help="dataset statistics"))
    p = sub.add_parser("verify-theory", help="polynomial-expansion and walk-mixing checks")
    p.add_argument("--out", default=None)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--graphs", type=int, default=10)
    p.add_argument("--nodes", type=int, default=20)
    p.add_argument("--edge-prob", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--walk-k-max", type=int, default=50)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = set(values) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    env_out = os.environ.get(OUTPUT_ENV)
    if env_out:
        values["output_dir"] = env_out
    for f in fields(ExperimentConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            values[f.name] = flag_value
    return ExperimentConfig(**values)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"dgae: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify-theory":
            out = args.out or os.environ.get(OUTPUT_ENV) or "theory"
            return cmd_verify_theory(out, args.k_min, args.k_max, args.graphs, args.nodes, args.edge_prob,
                                     args.seed, args.tol, args.walk_k_max)
        cfg = resolve_config(args)
        if args.command == "run":
            return cmd_run(cfg, args.timestamp)
        if args.command == "sweep":
            return cmd_sweep(cfg, timestamp=args.timestamp)
        if args.command == "export-embeddings":
            return cmd_export_embeddings(args.checkpoint, cfg, args.output)
        if args.command == "split":
            return cmd_split(cfg, cfg.output_dir)
        if args.command == "info":
            return cmd_info(cfg)
    except UsageError as exc:
        print(f"dgae: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"dgae: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
