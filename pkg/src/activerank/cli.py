"""Command line interface: synth, run, serve, eval, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import loop as loop_mod
from . import metrics as metrics_mod
from . import network, runlog, uncertainty
from .data import (
    Dataset,
    DatasetSplit,
    SimulatedOracle,
    SynthConfig,
    load_dataset,
    save_dataset,
    split_groupwise,
    synth_generate,
)
from .errors import (
    ActiveRankError,
    ConfigurationError,
    ParseError,
    SchemaError,
    ShapeError,
    UndefinedMetricError,
    ValidationError,
)
from .ranking import TrainConfig

log = logging.getLogger(__name__)

USAGE_ERRORS = (
    ConfigurationError,
    ValidationError,
    ShapeError,
    ParseError,
    SchemaError,
    UndefinedMetricError,
    FileNotFoundError,
)


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with code 1 on usage errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override the loop seed")
    parser.add_argument("--out-dir", help="override the run directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="activerank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic dataset")
    _common_flags(p)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--proportions", default="0.65,0.19,0.14,0.02")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.25)
    p.add_argument("--group-block", type=int, default=20)
    p.add_argument("--out", required=True, help="output JSON-lines file")

    p = sub.add_parser("run", help="run the loop with the simulated oracle")
    _common_flags(p)
    p.add_argument("--sampler", choices=loop_mod.SAMPLERS, help="override the sampler")

    p = sub.add_parser("serve", help="serve the human-in-the-loop annotation API")
    _common_flags(p)
    p.add_argument("--port", type=int, help="override the port")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", help="static UI bundle to serve at /")

    p = sub.add_parser("eval", help="compute metrics for a finished run")
    _common_flags(p)
    p.add_argument("--run-dir", required=True)

    p = sub.add_parser("report", help="render metric tables and posterior dumps")
    _common_flags(p)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--compare", help="second run directory for a McNemar comparison")
    return parser


# --- config handling -------------------------------------------------------


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} does not exist")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})") from exc


def _synth_config(section: dict) -> SynthConfig:
    return SynthConfig(
        num_classes=section.get("num_classes", len(section.get("proportions", (0.65, 0.19, 0.14, 0.02)))),
        class_proportions=tuple(section.get("proportions", (0.65, 0.19, 0.14, 0.02))),
        n=section.get("n", 5000),
        feature_dim=section.get("feature_dim", 16),
        noise_scale=section.get("noise_scale", 0.25),
        seed=section.get("seed", 0),
        group_block=section.get("group_block", 20),
    )


def build_bundle(config: dict, dataset: Dataset | None = None):
    """Materialize dataset, split, initial params, and configs from JSON."""
    if dataset is None:
        if config.get("dataset"):
            dataset = load_dataset(config["dataset"])
        elif config.get("synth"):
            dataset = synth_generate(_synth_config(config["synth"]))
        else:
            raise ConfigurationError("config needs either 'dataset' or 'synth'")
    split_cfg = config.get("split", {})
    split = split_groupwise(
        dataset,
        tuple(split_cfg.get("fractions", (0.6, 0.2, 0.2))),
        split_cfg.get("seed", 0),
    )
    net_cfg = config.get("network", {})
    layer_sizes = [dataset.feature_dim, *net_cfg.get("hidden", [32]), 1]
    params = network.init_network(
        layer_sizes,
        net_cfg.get("init_seed", 0),
        net_cfg.get("dropout_rate", 0.2),
        net_cfg.get("weight_decay", 1e-4),
    )
    loop_cfg = loop_mod.LoopConfig(**config.get("loop", {}))
    train_cfg = TrainConfig(**config.get("train", {}))
    return dataset, split, params, loop_cfg, train_cfg


def _apply_overrides(config: dict, args) -> dict:
    config = dict(config)
    if getattr(args, "seed", None) is not None:
        config.setdefault("loop", {})
        config["loop"] = {**config["loop"], "seed": args.seed}
    if getattr(args, "out_dir", None):
        config["out_dir"] = args.out_dir
    if getattr(args, "sampler", None):
        config["loop"] = {**config.get("loop", {}), "sampler": args.sampler}
    if getattr(args, "port", None):
        config["port"] = args.port
    return config


# --- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    proportions = tuple(float(x) for x in args.proportions.split(","))
    cfg = SynthConfig(
        num_classes=args.classes if args.classes is not None else len(proportions),
        class_proportions=proportions,
        n=args.n,
        feature_dim=args.dim,
        noise_scale=args.noise,
        seed=args.seed if args.seed is not None else 0,
        group_block=args.group_block,
    )
    dataset = synth_generate(cfg)
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} samples to {args.out}")
    return 0


def _require_config(args) -> dict:
    if not args.config:
        raise ConfigurationError("this command needs --config")
    return _apply_overrides(load_config(args.config), args)


def cmd_run(args) -> int:
    config = _require_config(args)
    out_dir = config.get("out_dir")
    if not out_dir:
        raise ConfigurationError("config needs 'out_dir' (or pass --out-dir)")
    dataset, split, params, loop_cfg, train_cfg = build_bundle(config)
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, run_dir / "dataset.jsonl")
    (run_dir / "config.json").write_text(
        json.dumps({**config, "out_dir": str(run_dir)}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    oracle = SimulatedOracle(split.train, seed=loop_cfg.seed)
    state = loop_mod.run_loop(
        split, oracle, loop_cfg, train_cfg, params, out_dir=run_dir
    )
    print(
        f"run complete: {len(state.labeled)} labeled pairs "
        f"({100 * state.labeling_ratio:.1f}% of {state.n_train} training samples)"
    )
    return 0


def _load_run(run_dir) -> tuple[dict, Dataset, DatasetSplit]:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory {run_dir} does not exist")
    config = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
    data_path = run_dir / "dataset.jsonl"
    preloaded = load_dataset(data_path) if data_path.exists() else None
    dataset, split, _, _, _ = build_bundle(config, preloaded)
    return config, dataset, split


def _final_params(run_dir) -> tuple[int, network.NetworkParams]:
    run_dir = Path(run_dir)
    rounds = sorted(
        int(p.stem.split("-")[-1]) for p in run_dir.glob("params-round-*.bin")
    )
    if not rounds:
        raise FileNotFoundError(f"no parameter snapshots in {run_dir}")
    last = rounds[-1]
    return last, runlog.load_params(run_dir / f"params-round-{last}.bin")


def _mc_scores(params, samples, draws: int, base_seed: int) -> dict[str, float]:
    posteriors = uncertainty.posterior_for_pool(params, samples, draws, base_seed)
    return {p.sample_id: p.mean for p in posteriors}


def evaluate_run(run_dir) -> metrics_mod.MetricReport:
    """Recompute the full metric suite for a finished run directory."""
    config, dataset, split = _load_run(run_dir)
    loop_cfg = loop_mod.LoopConfig(**config.get("loop", {}))
    _, params = _final_params(run_dir)
    eval_seed = loop_mod.derive_seed(loop_cfg.seed, 9999)

    scores = _mc_scores(params, split.test.samples, loop_cfg.draws, eval_seed)
    rng = np.random.default_rng(eval_seed)
    overall_pairs = metrics_mod.build_test_pairs(split.test, "overall", rng)
    neighboring = metrics_mod.build_test_pairs(split.test, "neighboring", rng)

    report = metrics_mod.MetricReport()
    report.overall_accuracy = metrics_mod.pair_accuracy(overall_pairs, scores)
    for (lo, hi), pairs in neighboring.items():
        report.neighboring_accuracies[f"{lo}-{hi}"] = metrics_mod.pair_accuracy(pairs, scores)
    if report.neighboring_accuracies:
        report.mean_neighboring = sum(report.neighboring_accuracies.values()) / len(
            report.neighboring_accuracies
        )

    num_classes = dataset.num_classes
    true_labels = [s.ordinal_label for s in split.test]
    predicted = [
        metrics_mod.quantize_score(scores[s.id], num_classes) for s in split.test
    ]
    report.per_class, report.macro = metrics_mod.classification_metrics(
        true_labels, predicted, num_classes
    )

    selections = _selected_ids(run_dir)
    report.class_proportions = metrics_mod.class_proportions(
        selections, split.train, num_classes
    )
    posteriors = uncertainty.posterior_for_pool(
        params, split.train.samples, loop_cfg.draws, eval_seed
    )
    report.uncertainty_stats = metrics_mod.uncertainty_by_class(posteriors, split.train)

    summary_path = Path(run_dir) / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        report.cost_seconds = int(summary.get("cost_seconds", 0))
    return report


def _selected_ids(run_dir) -> list[str]:
    ids = []
    path = Path(run_dir) / "selections.csv"
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            _, sid, _ = line.rstrip("\n").split(",")
            ids.append(sid)
    return ids


def cmd_eval(args) -> int:
    report = evaluate_run(args.run_dir)
    out = Path(args.run_dir) / "metrics.json"
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"overall pair accuracy: {report.overall_accuracy:.3f}")
    for name, acc in sorted(report.neighboring_accuracies.items()):
        print(f"neighboring {name}: {acc:.3f}")
    if report.mean_neighboring is not None:
        print(f"neighboring mean: {report.mean_neighboring:.3f}")
    print(f"macro F1: {report.macro.get('f1', float('nan')):.3f}")
    print(f"annotation cost: {report.cost_seconds} s")
    print(f"metrics written to {out}")
    return 0


def _format_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[k]) for r in rows)) if rows else len(h) for k, h in enumerate(header)]
    def fmt(row):
        return "  ".join(str(cell).ljust(widths[k]) for k, cell in enumerate(row))
    sep = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([fmt(header), sep, *(fmt(r) for r in rows)])


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    metrics_path = run_dir / "metrics.json"
    if metrics_path.exists():
        rep = json.loads(metrics_path.read_text(encoding="utf-8"))
    else:
        rep = evaluate_run(run_dir).to_dict()
        metrics_path.write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    config, dataset, split = _load_run(run_dir)
    loop_cfg = loop_mod.LoopConfig(**config.get("loop", {}))
    summary = {}
    summary_path = run_dir / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))

    print("# Relative label estimation")
    neighbor_keys = sorted(rep["neighboring_accuracies"])
    header = ["Sampler", "Labeling ratio", "Overall", *neighbor_keys, "Mean"]
    row = [
        loop_cfg.sampler,
        f"{100 * summary.get('labeling_ratio', 0):.0f}%",
        f"{rep['overall_accuracy']:.3f}",
        *(f"{rep['neighboring_accuracies'][k]:.3f}" for k in neighbor_keys),
        f"{rep['mean_neighboring']:.3f}" if rep["mean_neighboring"] is not None else "-",
    ]
    print(_format_table(header, [row]))

    print("\n# Annotation cost")
    print(
        _format_table(
            ["Relative", "Absolute", "Time (s)"],
            [[
                str(summary.get("relative_annotations", 0)),
                str(summary.get("unique_absolute_annotations", 0)),
                str(summary.get("cost_seconds", 0)),
            ]],
        )
    )

    print("\n# Classification")
    rows = [
        [str(c), f"{v['precision']:.3f}", f"{v['recall']:.3f}", f"{v['f1']:.3f}"]
        for c, v in sorted(rep["per_class"].items(), key=lambda kv: int(kv[0]))
    ]
    rows.append(
        ["macro", f"{rep['macro']['precision']:.3f}", f"{rep['macro']['recall']:.3f}", f"{rep['macro']['f1']:.3f}"]
    )
    print(_format_table(["Class", "Precision", "Recall", "F1"], rows))

    _, params = _final_params(run_dir)
    eval_seed = loop_mod.derive_seed(loop_cfg.seed, 9999)
    posteriors = uncertainty.posterior_for_pool(
        params, split.train.samples, loop_cfg.draws, eval_seed
    )
    post_path = run_dir / "posteriors.csv"
    with open(post_path, "w", encoding="utf-8") as fh:
        fh.write("id,mean,variance\n")
        for p in posteriors:
            fh.write(f"{p.sample_id},{p.mean!r},{p.variance!r}\n")
    print(f"\nposterior dump written to {post_path}")

    if args.compare:
        stat = _compare_runs(run_dir, Path(args.compare))
        print(f"\nMcNemar statistic vs {args.compare}: {stat:.4f}")
    return 0


def _compare_runs(run_a, run_b) -> float:
    """Continuity-corrected McNemar statistic over a shared test pair set."""
    config_a, _, split_a = _load_run(run_a)
    loop_a = loop_mod.LoopConfig(**config_a.get("loop", {}))
    _, params_a = _final_params(run_a)
    _, params_b = _final_params(run_b)
    eval_seed = loop_mod.derive_seed(loop_a.seed, 9999)
    rng = np.random.default_rng(eval_seed)
    pairs = metrics_mod.build_test_pairs(split_a.test, "overall", rng)
    scores_a = _mc_scores(params_a, split_a.test.samples, loop_a.draws, eval_seed)
    scores_b = _mc_scores(params_b, split_a.test.samples, loop_a.draws, eval_seed)
    flags_a = metrics_mod.pair_correctness(pairs, scores_a)
    flags_b = metrics_mod.pair_correctness(pairs, scores_b)
    only_a = sum(1 for fa, fb in zip(flags_a, flags_b) if fa and not fb)
    only_b = sum(1 for fa, fb in zip(flags_a, flags_b) if fb and not fa)
    return metrics_mod.mcnemar_statistic(only_a, only_b)


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AnnotationServer, create_app

    config = _require_config(args)
    out_dir = config.get("out_dir")
    if not out_dir:
        raise ConfigurationError("config needs 'out_dir' (or pass --out-dir)")
    dataset, split, params, loop_cfg, train_cfg = build_bundle(config)
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, run_dir / "dataset.jsonl")
    (run_dir / "config.json").write_text(
        json.dumps({**config, "out_dir": str(run_dir)}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    server = AnnotationServer(
        run_id=run_dir.name,
        split=split,
        loop_config=loop_cfg,
        train_config=train_cfg,
        params=params,
        out_dir=run_dir,
    )
    ui_dir = args.ui_dir or config.get("ui_dir")
    app = create_app(server, ui_dir=ui_dir)
    server.start()
    port = config.get("port", 8765)
    print(f"serving run {run_dir.name!r} on http://{args.host}:{port}")
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "synth": cmd_synth,
        "run": cmd_run,
        "serve": cmd_serve,
        "eval": cmd_eval,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ActiveRankError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
