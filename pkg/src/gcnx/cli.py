"""Command-line pipeline: train, explain, metrics, mine.

Every artifact embeds the tool version, a hash of the effective
configuration, and the seed; payloads carry no timestamps, so identical
configurations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

import gcnx
from gcnx.datasets import DataError, LabeledSet, SplitSpec, load_csv, split, synth_motif_set
from gcnx.explainers import METHODS, explain_pair
from gcnx.metrics import metric_suite
from gcnx.mining import mine
from gcnx.model import (
    ConfigurationError,
    TrainConfig,
    TrainingError,
    evaluate,
    forward,
    load_checkpoint,
    save_checkpoint,
    train,
)
from gcnx.render import layout_molecule, molecule_dot, molecule_svg
from gcnx.smiles import featurize
from gcnx.util import parallel_map

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]


def artifact_header(config: dict) -> dict:
    return {
        "tool_version": gcnx.__version__,
        "config_hash": config_hash(config),
        "seed": config.get("seed"),
    }


def csv_header_line(config: dict) -> str:
    header = artifact_header(config)
    return (
        f"# gcnx {header['tool_version']} config={header['config_hash']} "
        f"seed={header['seed']}"
    )


def load_data(args) -> LabeledSet:
    """--data accepts a CSV path or synth:<motif>:<n> for a generated set."""
    spec = args.data
    if spec.startswith("synth:"):
        parts = spec.split(":")
        if len(parts) != 3 or not parts[2].isdigit():
            raise DataError(f"synthetic data spec must be synth:<motif>:<n>, got {spec!r}")
        return synth_motif_set(int(parts[2]), parts[1], seed=args.seed)
    return load_csv(
        spec,
        smiles_column=args.smiles_column,
        label_column=args.task_column,
        id_column=args.id_column,
    )


def effective_config(args, command: str) -> dict:
    skip = {"func", "out_dir"}
    config = {
        key: value for key, value in sorted(vars(args).items()) if key not in skip
    }
    config["command"] = command
    return config


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def model_graphs(dataset: LabeledSet, scheme):
    """Featurize molecules under the checkpoint's scheme."""
    return [
        (mol_id, featurize(molecule, scheme), label)
        for mol_id, molecule, label in dataset.entries
    ]


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    config = effective_config(args, "train")
    dataset = load_data(args)
    train_set, val_set, test_set = split(
        dataset, SplitSpec(seed=args.seed, stratified=True)
    )
    cfg = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        layer_sizes=tuple(args.layers),
        seed=args.seed,
        class_weighting=not args.no_class_weighting,
    )
    result = train(
        train_set.graph_pairs(),
        cfg,
        validation=val_set.graph_pairs(),
    )
    test_metrics = evaluate(result.params, test_set.graph_pairs())

    os.makedirs(args.out_dir, exist_ok=True)
    checkpoint_path = os.path.join(args.out_dir, "checkpoint.json")
    save_checkpoint(checkpoint_path, result.params, cfg, seed=args.seed)
    log_payload = {
        "header": artifact_header(config),
        "provenance": dataset.provenance,
        "skipped_rows": dataset.skipped,
        "class_counts": {
            "positives": dataset.class_counts[0],
            "negatives": dataset.class_counts[1],
        },
        "label_census": list(dataset.label_census) if dataset.label_census else None,
        "split_note": "random stratified split; scaffold split not implemented",
        "sizes": {
            "train": len(train_set),
            "validation": len(val_set),
            "test": len(test_set),
        },
        "best_epoch": result.best_epoch,
        "history": result.history,
        "test_metrics": test_metrics,
    }
    write_json(os.path.join(args.out_dir, "train_log.json"), log_payload)
    print(f"checkpoint written to {checkpoint_path}")
    print(
        f"final: test accuracy {test_metrics['accuracy']:.4f}"
        + (
            f", roc_auc {test_metrics['roc_auc']:.4f}"
            if test_metrics["roc_auc"] is not None
            else ""
        )
    )
    return EXIT_OK


# -------------------------------------------------------------- explain


def _parse_layers(raw: str | None, n_layers: int) -> list[int]:
    if not raw:
        return [n_layers]
    try:
        layers = [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigurationError(f"--layers must be comma-separated integers, got {raw!r}")
    for layer in layers:
        if not 1 <= layer <= n_layers:
            raise ConfigurationError(f"layer {layer} outside 1..{n_layers}")
    return layers


def cmd_explain(args) -> int:
    config = effective_config(args, "explain")
    params, _, scheme, _ = load_checkpoint(args.checkpoint)
    dataset = load_data(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    layers = _parse_layers(args.layers_list, params.n_layers)
    graphs = model_graphs(dataset, scheme)

    os.makedirs(args.out_dir, exist_ok=True)
    records_path = os.path.join(args.out_dir, "heatmaps.jsonl")

    def explain_one(entry):
        (mol_id, graph, _), molecule = entry
        trace = forward(graph, params)
        records = []
        rendered = {}
        for method in methods:
            method_layers = layers if method == "grad_cam" else [None]
            for layer in method_layers:
                h_pos, h_neg = explain_pair(
                    graph, params, method, layer=layer, trace=trace
                )
                for heat in (h_neg, h_pos):
                    records.append(
                        heat.to_record(mol_id, molecule.source_string)
                    )
                rendered[(method, layer)] = {
                    0: h_neg.values,
                    1: h_pos.values,
                }
        return records, rendered

    entries = [
        ((mol_id, graph, label), molecule)
        for (mol_id, graph, label), (_, molecule, _) in zip(graphs, dataset.entries)
    ]
    results = parallel_map(explain_one, entries)

    with open(records_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"header": artifact_header(config)}) + "\n")
        for records, _ in results:
            for record in records:
                fh.write(json.dumps(record) + "\n")

    if args.render:
        render_dir = os.path.join(args.out_dir, "render")
        os.makedirs(render_dir, exist_ok=True)
        for ((mol_id, _, _), molecule), (_, rendered) in zip(entries, results):
            positions = layout_molecule(molecule, seed=args.seed)
            for (method, layer), values_by_class in rendered.items():
                suffix = f"{method}" + (f"-l{layer}" if layer is not None else "")
                stem = os.path.join(render_dir, f"{mol_id}-{suffix}")
                svg = molecule_svg(
                    molecule,
                    values_by_class,
                    positions,
                    title=f"{mol_id} {suffix}",
                )
                with open(stem + ".svg", "w", encoding="utf-8") as fh:
                    fh.write(svg)
                with open(stem + ".dot", "w", encoding="utf-8") as fh:
                    fh.write(molecule_dot(molecule, values_by_class))

    n_records = sum(len(records) for records, _ in results)
    print(f"wrote {n_records} heatmap records to {records_path}")
    return EXIT_OK


# -------------------------------------------------------------- metrics


def cmd_metrics(args) -> int:
    config = effective_config(args, "metrics")
    params, _, scheme, _ = load_checkpoint(args.checkpoint)
    dataset = load_data(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    data = [(graph, label) for _, graph, label in model_graphs(dataset, scheme)]
    reports = metric_suite(params, data, methods, threshold=args.fidelity_threshold)

    os.makedirs(args.out_dir, exist_ok=True)
    json_path = os.path.join(args.out_dir, "metrics.json")
    write_json(
        json_path,
        {
            "header": artifact_header(config),
            "reports": [report.to_dict() for report in reports],
        },
    )
    csv_path = os.path.join(args.out_dir, "metrics.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_header_line(config) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["method", "fidelity", "contrastivity", "sparsity"])
        for report in reports:
            writer.writerow(
                [
                    report.method,
                    f"{report.fidelity:.4f}",
                    f"{report.contrastivity_mean:.2f}±{report.contrastivity_std:.2f}",
                    f"{report.sparsity_mean:.2f}±{report.sparsity_std:.2f}",
                ]
            )
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


# ----------------------------------------------------------------- mine


def cmd_mine(args) -> int:
    config = effective_config(args, "mine")
    params, _, scheme, _ = load_checkpoint(args.checkpoint)
    dataset = load_data(args)
    graphs = model_graphs(dataset, scheme)

    def explain_one(item):
        mol_id, graph, _ = item
        trace = forward(graph, params)
        predicted = int(np.argmax(trace.probabilities))
        h_pos, h_neg = explain_pair(graph, params, "grad_cam", trace=trace)
        heat = h_pos if predicted == 1 else h_neg
        return mol_id, predicted, heat.values

    explained = parallel_map(explain_one, graphs)
    predictions = {mol_id: predicted for mol_id, predicted, _ in explained}
    heatmaps = {mol_id: values for mol_id, _, values in explained}

    records = mine(
        dataset.entries,
        heatmaps,
        predictions=predictions,
        tau=args.tau,
        min_occurrence=args.min_occurrence,
        top_k=args.top_k,
        true_positives_only=not args.all_samples,
    )
    rows = [record.to_dict() for record in records]
    average_r_p = float(np.mean([row["r_p"] for row in rows])) if rows else None

    os.makedirs(args.out_dir, exist_ok=True)
    json_path = os.path.join(args.out_dir, "mining.json")
    write_json(
        json_path,
        {
            "header": artifact_header(config),
            "base_method": "grad_cam",
            "records": rows,
            "average_r_p": average_r_p,
        },
    )
    csv_path = os.path.join(args.out_dir, "mining.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_header_line(config) + "\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["rank", "substructure", "canonical_key", "n_explained", "n_pos", "n_neg", "r_e", "r_p"]
        )
        for rank, row in enumerate(rows, start=1):
            writer.writerow(
                [
                    rank,
                    row["substructure"],
                    row["canonical_key"],
                    row["n_explained"],
                    row["n_pos"],
                    row["n_neg"],
                    f"{row['r_e']:.4f}",
                    f"{row['r_p']:.4f}",
                ]
            )
        if average_r_p is not None:
            writer.writerow(["", "average_r_p", "", "", "", "", "", f"{average_r_p:.4f}"])
    print(f"wrote {csv_path} and {json_path} ({len(rows)} substructures)")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="CSV path or synth:<motif>:<n>")
    parser.add_argument("--smiles-column", default="smiles")
    parser.add_argument("--task-column", default="label", help="label column name")
    parser.add_argument("--id-column", default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcnx",
        description="Train molecular GCN classifiers, explain them per atom, "
        "score the explanations, and mine salient substructures.",
    )
    parser.add_argument("--version", action="version", version=gcnx.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a classifier and write a checkpoint")
    _add_common(p_train)
    p_train.add_argument("--epochs", type=int, default=100)
    p_train.add_argument("--lr", type=float, default=0.001)
    p_train.add_argument(
        "--layers",
        type=lambda s: [int(x) for x in s.split(",")],
        default=[128, 256, 512],
        help="comma-separated convolution widths",
    )
    p_train.add_argument("--no-class-weighting", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_explain = sub.add_parser("explain", help="emit per-atom heatmap records")
    _add_common(p_explain)
    p_explain.add_argument("--checkpoint", required=True)
    p_explain.add_argument("--methods", default=",".join(METHODS))
    p_explain.add_argument(
        "--layers",
        dest="layers_list",
        default=None,
        help="comma-separated grad_cam layers (default: final layer)",
    )
    p_explain.add_argument("--render", action="store_true", help="emit SVG + DOT depictions")
    p_explain.set_defaults(func=cmd_explain)

    p_metrics = sub.add_parser("metrics", help="fidelity/contrastivity/sparsity table")
    _add_common(p_metrics)
    p_metrics.add_argument("--checkpoint", required=True)
    p_metrics.add_argument(
        "--methods", default="gradient,grad_cam,grad_cam_avg,eb,ceb"
    )
    p_metrics.add_argument("--fidelity-threshold", type=float, default=0.01)
    p_metrics.set_defaults(func=cmd_metrics)

    p_mine = sub.add_parser("mine", help="rank salient substructures")
    _add_common(p_mine)
    p_mine.add_argument("--checkpoint", required=True)
    p_mine.add_argument("--tau", type=float, default=0.0)
    p_mine.add_argument("--min-occurrence", type=int, default=10)
    p_mine.add_argument("--top-k", type=int, default=10)
    p_mine.add_argument(
        "--all-samples",
        action="store_true",
        help="mine every explained molecule, not only true positives",
    )
    p_mine.set_defaults(func=cmd_mine)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ConfigurationError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
