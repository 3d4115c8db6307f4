"""Command-line entry points.

Subcommands mirror the pipeline stages: ``synth`` emits a benchmark,
``lsh`` the candidate table, ``curves`` the banding probability table,
``train`` the ensemble comparison and EM history, ``run`` the full
pipeline report, and ``eval`` re-scores saved rankings.  Failures exit
nonzero with a JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .data import write_csv
from .encoding import design_matrix
from .ensemble import (
    DEFAULT_GRIDS,
    save_spec,
    select_best_method,
    write_comparison_csv,
)
from .errors import MicrolinkError
from .lsh import s_curve_table, write_candidates_csv, write_s_curve_csv
from .pipeline import (
    PipelineConfig,
    assemble_training,
    evaluate_topn,
    load_benchmark,
    load_config,
    run_pipeline,
)
from .ranking import RankedCandidate, write_rankings_csv
from .semisupervised import (
    compare_em,
    em_train,
    write_em_comparison_csv,
    write_history_csv,
)
from .synthetic import generate_synthetic


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        json.dump({"error": "UsageError", "message": message}, sys.stderr)
        sys.stderr.write("\n")
        self.exit(2)


def _build_parser():
    parser = _Parser(prog="microlink", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("synth", "generate a synthetic benchmark as CSV files"),
        ("lsh", "emit the adaptive candidate table"),
        ("curves", "emit collision probabilities over the similarity grid"),
        ("train", "compare ensemble methods and train with the EM loop"),
        ("run", "execute the full estimation pipeline"),
        ("eval", "re-score a saved rankings file against ground truth"),
    ):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", help="pipeline config JSON file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", default=".", help="output directory")
        if name == "eval":
            p.add_argument("--rankings", required=True, help="rankings CSV")
            p.add_argument("--truth", required=True, help="ground truth CSV")
            p.add_argument("--top-n", type=int, default=3)
    return parser


def _load_cfg(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.master_seed = args.seed
    return cfg


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _emit(payload):
    json.dump(payload, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")


def _cmd_synth(args):
    cfg = _load_cfg(args)
    out = _outdir(args)
    bench = generate_synthetic(cfg.synthetic, cfg.master_seed)
    support_path = os.path.join(out, "support.csv")
    open_path = os.path.join(out, "open.csv")
    truth_path = os.path.join(out, "ground_truth.csv")
    write_csv(bench.support, support_path)
    write_csv(bench.open_records, open_path)
    with open(truth_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["open_id", "support_id"])
        for open_id in sorted(bench.ground_truth):
            writer.writerow([open_id, bench.ground_truth[open_id]])
    _emit({
        "support": support_path, "open": open_path, "ground_truth": truth_path,
        "n_support": len(bench.support.rows),
        "n_events": len(bench.open_records.rows),
    })
    return 0


def _candidates_for(cfg):
    from .data import tokenize_common, tokenize_dataset
    from .lsh import SupportIndex, query_adaptive

    bench = load_benchmark(cfg)
    tokens = tokenize_dataset(bench.support, binnings=bench.binnings)
    index = SupportIndex(tokens, cfg.schedule, seed=cfg.master_seed)
    common = bench.open_records.common_features()
    candidates = {}
    for row in bench.open_records.rows:
        shingles = tokenize_common(row, common, binnings=bench.binnings)
        candidates[row.id] = query_adaptive(shingles, index, open_id=row.id)
    return bench, candidates


def _cmd_lsh(args):
    cfg = _load_cfg(args)
    out = _outdir(args)
    _, candidates = _candidates_for(cfg)
    pairs = [p for open_id in sorted(candidates) for p in candidates[open_id]]
    path = os.path.join(out, "candidates.csv")
    write_candidates_csv(pairs, path)
    _emit({
        "candidates": path,
        "n_pairs": len(pairs),
        "events_with_candidates": sum(1 for v in candidates.values() if v),
    })
    return 0


def _cmd_curves(args):
    cfg = _load_cfg(args)
    out = _outdir(args)
    grid = np.round(np.linspace(0.0, 1.0, 101), 2)
    rows = s_curve_table(cfg.schedule, grid)
    path = os.path.join(out, "curves.csv")
    write_s_curve_csv(rows, path)
    _emit({"curves": path, "n_rows": len(rows)})
    return 0


def _split_stratified(examples, fraction, seed):
    rng = np.random.default_rng(seed)
    _, y, _ = design_matrix(examples)
    hold = np.zeros(len(examples), dtype=bool)
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        n_hold = max(1, int(round(fraction * len(idx))))
        hold[idx[:n_hold]] = True
    keep = [ex for ex, h in zip(examples, hold) if not h]
    held = [ex for ex, h in zip(examples, hold) if h]
    return keep, held


def _cmd_train(args):
    cfg = _load_cfg(args)
    out = _outdir(args)
    bench, candidates = _candidates_for(cfg)
    from .classifiers import resample
    from .encoding import fit_encoder
    from .pipeline import _encode_ids

    seeds = np.random.SeedSequence((cfg.master_seed, 0)).generate_state(4)
    split_seed, resample_seed, _, model_seed = (int(s) for s in seeds)
    linked = sorted(e for e in bench.ground_truth)
    assembly = assemble_training(
        candidates, bench.ground_truth, bench.support, linked,
        cfg.negative_ratio, resample_seed,
    )
    rows_by_id = bench.support.records_by_id()
    encoder = fit_encoder(bench.support)
    labeled = (
        _encode_ids(assembly.positive_ids, 1, encoder, rows_by_id)
        + _encode_ids(assembly.negative_ids, 0, encoder, rows_by_id)
    )
    labeled = resample(labeled, cfg.resample_strategy, cfg.resample_ratio,
                       resample_seed)
    unlabeled = _encode_ids(assembly.unlabeled_ids, -1, encoder, rows_by_id)
    train, valid = _split_stratified(labeled, 0.25, split_seed)
    spec, comparison = select_best_method(train, valid, DEFAULT_GRIDS, model_seed)
    comparison_path = os.path.join(out, "comparison.csv")
    write_comparison_csv(comparison, comparison_path)
    spec_path = os.path.join(out, "chosen_spec.json")
    save_spec(spec, spec_path)
    _, history = em_train(train, unlabeled, spec, cfg.em, valid=valid,
                          seed=model_seed)
    history_path = os.path.join(out, "em_history.csv")
    write_history_csv(history, history_path)
    _, _, em_rows = compare_em(train, unlabeled, spec, cfg.em, valid,
                               seed=model_seed)
    em_comparison_path = os.path.join(out, "em_comparison.csv")
    write_em_comparison_csv(em_rows, em_comparison_path)
    _emit({
        "comparison": comparison_path,
        "chosen_spec": spec_path,
        "em_history": history_path,
        "em_comparison": em_comparison_path,
        "method": spec.method,
    })
    return 0


def _cmd_run(args):
    cfg = _load_cfg(args)
    out = _outdir(args)
    report = run_pipeline(cfg)
    json_path = os.path.join(out, "report.json")
    csv_path = os.path.join(out, "report.csv")
    report.write_json(json_path)
    report.write_csv(csv_path)
    pairs = [
        p for open_id in sorted(report.candidates)
        for p in report.candidates[open_id]
    ]
    candidates_path = os.path.join(out, "candidates.csv")
    write_candidates_csv(pairs, candidates_path)
    last = max(report.rankings)
    ranking_rows = [
        (open_id, rc)
        for open_id in sorted(report.rankings[last])
        for rc in report.rankings[last][open_id]
    ]
    rankings_path = os.path.join(out, "rankings.csv")
    write_rankings_csv(ranking_rows, rankings_path)
    history_path = os.path.join(out, "em_history.csv")
    write_history_csv(report.em_history[last], history_path)
    _emit({
        "report_json": json_path,
        "report_csv": csv_path,
        "candidates": candidates_path,
        "rankings": rankings_path,
        "em_history": history_path,
        "mean_accuracy": report.mean_accuracy,
    })
    return 0


def _read_rankings(path):
    rankings = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rc = RankedCandidate(
                support_id=row["support_id"],
                log_score=float(row["log_score"]),
                normalized_score=float(row["normalized_score"]),
                rank=int(row["rank"]),
            )
            rankings.setdefault(row["open_id"], []).append(rc)
    for ranked in rankings.values():
        ranked.sort(key=lambda rc: rc.rank)
    return rankings


def _cmd_eval(args):
    out = _outdir(args)
    rankings = _read_rankings(args.rankings)
    truth = {}
    with open(args.truth, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            truth[row["open_id"]] = row["support_id"]
    result = evaluate_topn(rankings, truth, args.top_n)
    path = os.path.join(out, "eval.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result, fh, sort_keys=True)
    _emit({**result, "eval": path})
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "lsh": _cmd_lsh,
    "curves": _cmd_curves,
    "train": _cmd_train,
    "run": _cmd_run,
    "eval": _cmd_eval,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except MicrolinkError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except OSError as exc:
        json.dump({"error": "IOError", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
