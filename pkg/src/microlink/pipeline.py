"""End-to-end orchestration of the four estimation stages.

For each run: adaptive LSH candidate search over the support corpus,
training-set assembly (linked records are positives, never-candidates are
negatives, candidates of unresolved events stay unlabeled), EM-trained
ensemble filtering of candidates, and conditional-probability ranking of
the survivors.  Top-N hits against ground truth are aggregated into a
per-run report with a mean-accuracy summary.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .classifiers import ModelConfig, feature_importance, fit, resample
from .data import (
    FeatureSpec,
    Record,
    TabularDataset,
    fit_common_binnings,
    load_csv,
    tokenize_common,
    tokenize_dataset,
)
from .encoding import LabeledExample, fit_encoder
from .ensemble import EnsembleSpec, predict_proba_any
from .errors import (
    InvalidConfigError,
    InvalidParamsError,
    NoPositivesError,
    UnknownEventError,
)
from .lsh import AdaptiveSchedule, BandingScheme, SupportIndex, query_adaptive
from .ranking import fit_cond_prob, rank_candidates
from .semisupervised import EmConfig, em_train
from .synthetic import SyntheticBenchmark, SyntheticParams, generate_synthetic

# compact stacked ensemble: fast enough for repeated runs while keeping
# the forest + boosted trees + linear meta shape
DEFAULT_PIPELINE_ENSEMBLE = EnsembleSpec(
    "stacking",
    (
        ModelConfig("random_forest", ntrees=15, max_depth=8, nbins=16,
                    col_sample_rate_per_tree=0.7),
        ModelConfig("gbt", ntrees=20, max_depth=3, nbins=16),
        ModelConfig("glm", alpha=0.0, lambda_=1e-3),
    ),
    meta_config=ModelConfig("glm", alpha=0.5, lambda_=1e-3),
    n_folds=3,
)

_SELECTION_CONFIG = ModelConfig("random_forest", ntrees=20, max_depth=8, nbins=16)


@dataclass
class PipelineConfig:
    """Everything one estimation run needs; serializable both ways."""

    synthetic: SyntheticParams = field(default_factory=SyntheticParams)
    support_path: str = None
    open_path: str = None
    ground_truth_path: str = None
    support_features: tuple = None
    open_features: tuple = None
    schedule: AdaptiveSchedule = field(default_factory=AdaptiveSchedule.default)
    y_feature: str = "damage_amount"
    test_fraction: float = 0.1
    negative_ratio: float = 11.5
    resample_strategy: str = "both"
    resample_ratio: float = 0.5
    top_k_features: int = 10
    ensemble: EnsembleSpec = DEFAULT_PIPELINE_ENSEMBLE
    em: EmConfig = field(default_factory=lambda: EmConfig(max_iter=5))
    ranking_features: tuple = None
    ranking_smoothing: float = 1.0
    y_bins: int = 4
    n_runs: int = 10
    top_n: int = 3
    master_seed: int = 7

    def __post_init__(self):
        if self.n_runs < 1:
            raise InvalidParamsError("n_runs must be at least 1")
        if self.top_n < 1:
            raise InvalidParamsError("top_n must be at least 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise InvalidParamsError("test_fraction must lie in (0, 1)")
        if self.negative_ratio <= 0:
            raise InvalidParamsError("negative_ratio must be positive")
        if self.support_path and self.synthetic is not None:
            self.synthetic = None

    def to_dict(self):
        return {
            "source": self._source_dict(),
            "schedule": {
                "n_hashes": self.schedule.n_hashes,
                "schemes": [[s.bands, s.rows] for s in self.schedule.schemes],
            },
            "y_feature": self.y_feature,
            "test_fraction": self.test_fraction,
            "negative_ratio": self.negative_ratio,
            "resample_strategy": self.resample_strategy,
            "resample_ratio": self.resample_ratio,
            "top_k_features": self.top_k_features,
            "ensemble": self.ensemble.to_dict(),
            "em": {
                "max_iter": self.em.max_iter,
                "convergence_tol": self.em.convergence_tol,
                "pseudo_label_mode": self.em.pseudo_label_mode,
                "confidence_floor": self.em.confidence_floor,
            },
            "ranking": {
                "features": list(self.ranking_features) if self.ranking_features else None,
                "smoothing": self.ranking_smoothing,
                "y_bins": self.y_bins,
            },
            "n_runs": self.n_runs,
            "top_n": self.top_n,
            "master_seed": self.master_seed,
        }

    def _source_dict(self):
        if self.synthetic is not None:
            p = self.synthetic
            return {"synthetic": {
                "n_support": p.n_support, "n_events": p.n_events,
                "noise_rate": p.noise_rate, "n_categorical": p.n_categorical,
                "n_continuous": p.n_continuous, "cardinality": p.cardinality,
                "n_bins": p.n_bins, "with_support_only": p.with_support_only,
            }}
        return {
            "support_path": self.support_path,
            "open_path": self.open_path,
            "ground_truth_path": self.ground_truth_path,
            "support_features": [
                {"name": f.name, "kind": f.kind, "role": f.role}
                for f in (self.support_features or ())
            ],
            "open_features": [
                {"name": f.name, "kind": f.kind, "role": f.role}
                for f in (self.open_features or ())
            ],
        }

    @classmethod
    def from_dict(cls, d):
        kwargs = {}
        source = d.get("source", {})
        if "synthetic" in source:
            kwargs["synthetic"] = SyntheticParams(**source["synthetic"])
        else:
            kwargs["synthetic"] = None
            kwargs["support_path"] = source.get("support_path")
            kwargs["open_path"] = source.get("open_path")
            kwargs["ground_truth_path"] = source.get("ground_truth_path")
            kwargs["support_features"] = tuple(
                FeatureSpec(**f) for f in source.get("support_features", ())
            )
            kwargs["open_features"] = tuple(
                FeatureSpec(**f) for f in source.get("open_features", ())
            )
        if "schedule" in d:
            kwargs["schedule"] = AdaptiveSchedule(
                schemes=tuple(BandingScheme(b, r) for b, r in d["schedule"]["schemes"]),
                n_hashes=d["schedule"].get("n_hashes", 100),
            )
        if "ensemble" in d:
            kwargs["ensemble"] = EnsembleSpec.from_dict(d["ensemble"])
        if "em" in d:
            kwargs["em"] = EmConfig(**d["em"])
        ranking = d.get("ranking", {})
        if ranking.get("features"):
            kwargs["ranking_features"] = tuple(ranking["features"])
        if "smoothing" in ranking:
            kwargs["ranking_smoothing"] = ranking["smoothing"]
        if "y_bins" in ranking:
            kwargs["y_bins"] = ranking["y_bins"]
        for key in ("y_feature", "test_fraction", "negative_ratio",
                    "resample_strategy", "resample_ratio", "top_k_features",
                    "n_runs", "top_n", "master_seed"):
            if key in d:
                kwargs[key] = d[key]
        return cls(**kwargs)


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, sort_keys=True, indent=2)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return PipelineConfig.from_dict(json.load(fh))
        except (KeyError, TypeError, ValueError) as exc:
            # JSONDecodeError is a ValueError; Microlink errors pass through.
            raise InvalidConfigError(f"{path}: {exc}") from exc


def _load_ground_truth(path):
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out[row["open_id"]] = row["support_id"]
    return out


def load_benchmark(cfg):
    """Materialize the datasets: generate synthetic or read the files."""
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic, cfg.master_seed)
    support = load_csv(cfg.support_path, cfg.support_features)
    open_records = load_csv(cfg.open_path, cfg.open_features)
    ground_truth = (
        _load_ground_truth(cfg.ground_truth_path) if cfg.ground_truth_path else {}
    )
    binnings = fit_common_binnings(support)
    return SyntheticBenchmark(
        support=support, open_records=open_records,
        ground_truth=ground_truth, params=None, binnings=binnings,
    )


@dataclass
class TrainingSetAssembly:
    """Record-id partition feeding the semi-supervised classifier stage."""

    positive_ids: list
    negative_ids: list
    unlabeled_ids: list


def assemble_training(candidates, ground_truth, support, train_event_ids,
                      negative_ratio=11.5, seed=0):
    """Partition support records into positives, negatives, unlabeled.

    Positives are records linked to resolved training events.  Negatives
    are sampled only from records that never entered any candidate list.
    Candidates of unresolved events (everything not in the training split)
    form the unlabeled pool.
    """
    positives = sorted({ground_truth[e] for e in train_event_ids})
    if not positives:
        raise NoPositivesError("no linked training events")
    candidate_members = set()
    for pairs in candidates.values():
        candidate_members.update(p.support_id for p in pairs)
    all_ids = {row.id for row in support.rows}
    never = sorted(all_ids - candidate_members - set(positives))
    n_neg = min(len(never), int(round(negative_ratio * len(positives))))
    rng = np.random.default_rng(seed)
    negatives = sorted(
        str(v) for v in rng.choice(np.array(never), size=n_neg, replace=False)
    ) if never else []
    unresolved = [e for e in candidates if e not in set(train_event_ids)]
    unlabeled = set()
    for e in unresolved:
        unlabeled.update(p.support_id for p in candidates[e])
    unlabeled -= set(positives)
    return TrainingSetAssembly(positives, negatives, sorted(unlabeled))


def evaluate_topn(rankings, ground_truth, top_n, test_size=None):
    """Per-rank hit counts and overall accuracy of one run.

    ``test_size`` may exceed the number of ranked events: events whose
    candidate list died earlier still count in the denominator.
    """
    if test_size is None:
        test_size = len(rankings)
    hits = [0] * top_n
    for open_id, ranked in rankings.items():
        if open_id not in ground_truth:
            raise UnknownEventError(f"no ground truth for event {open_id!r}")
        true_id = ground_truth[open_id]
        for rc in ranked[:top_n]:
            if rc.support_id == true_id:
                hits[rc.rank - 1] += 1
                break
    row = {"test_size": int(test_size)}
    for k in range(top_n):
        row[f"top{k + 1}_hits"] = hits[k]
    row["accuracy"] = sum(hits) / test_size if test_size else 0.0
    return row


@dataclass
class EstimationReport:
    """Per-run Top-N rows plus the artifacts each stage produced."""

    config: dict
    rows: list
    mean_accuracy: float
    top_n: int
    candidates: dict = field(default_factory=dict, repr=False)
    em_history: dict = field(default_factory=dict, repr=False)
    rankings: dict = field(default_factory=dict, repr=False)
    selected_features: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        art_candidates = []
        for open_id in sorted(self.candidates):
            for p in self.candidates[open_id]:
                art_candidates.append([p.open_id, p.support_id, p.score])
        art_rankings = {
            str(run): [
                [open_id, rc.support_id, rc.rank, rc.log_score, rc.normalized_score]
                for open_id in sorted(ranked_map)
                for rc in ranked_map[open_id]
            ]
            for run, ranked_map in self.rankings.items()
        }
        art_history = {
            str(run): [
                {"iteration": it.iteration, "changed_fraction": it.changed_fraction}
                for it in history
            ]
            for run, history in self.em_history.items()
        }
        return {
            "format": "microlink-report",
            "version": 1,
            "config": self.config,
            "runs": self.rows,
            "mean_accuracy": self.mean_accuracy,
            "top_n": self.top_n,
            "artifacts": {
                "candidates": art_candidates,
                "em_history": art_history,
                "rankings": art_rankings,
                "selected_features": {
                    str(run): names for run, names in self.selected_features.items()
                },
            },
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["run", "test_size"]
            header += [f"top{k + 1}" for k in range(self.top_n)]
            header.append("accuracy")
            writer.writerow(header)
            for row in self.rows:
                line = [row["run"], row["test_size"]]
                line += [row[f"top{k + 1}_hits"] for k in range(self.top_n)]
                line.append(repr(row["accuracy"]))
                writer.writerow(line)
            mean_line = ["mean", ""] + ["" for _ in range(self.top_n)]
            mean_line.append(repr(self.mean_accuracy))
            writer.writerow(mean_line)


def _encode_ids(ids, label, encoder, rows_by_id):
    return [
        LabeledExample(encoder.transform_record(rows_by_id[i]), label, 1.0, i)
        for i in ids
    ]


def _reencode(examples, encoder, rows_by_id):
    return [
        LabeledExample(
            encoder.transform_record(rows_by_id[ex.source_id]),
            ex.label, ex.weight, ex.source_id,
        )
        for ex in examples
    ]


def _ranking_dataset(train_events, ground_truth, rows_by_id, support,
                     rank_features, y_feature, damage_by_event):
    features = [FeatureSpec("open_id", "identifier", "id")]
    for nm in rank_features:
        features.append(FeatureSpec(nm, support.feature(nm).kind, "common"))
    features.append(FeatureSpec(y_feature, "continuous", "open_only"))
    rows = []
    for e in train_events:
        rec = rows_by_id[ground_truth[e]]
        values = {"open_id": e, y_feature: damage_by_event[e]}
        for nm in rank_features:
            values[nm] = rec.values.get(nm)
        rows.append(Record(e, values))
    return TabularDataset(tuple(features), tuple(rows))


def run_pipeline(cfg):
    """Execute candidate search, training, filtering, and ranking n_runs
    times with per-run derived seeds; returns the aggregated report."""
    bench = load_benchmark(cfg)
    support, opens = bench.support, bench.open_records
    ground_truth = bench.ground_truth
    support_tokens = tokenize_dataset(support, binnings=bench.binnings)
    index = SupportIndex(support_tokens, cfg.schedule, seed=cfg.master_seed)
    open_common = opens.common_features()
    candidates = {}
    for row in opens.rows:
        tokens = tokenize_common(row, open_common, binnings=bench.binnings)
        candidates[row.id] = query_adaptive(tokens, index, open_id=row.id)

    open_ids = {row.id for row in opens.rows}
    linked = sorted(e for e in ground_truth if e in open_ids)
    if not linked:
        raise NoPositivesError("ground truth links no open records")
    rows_by_id = support.records_by_id()
    damage_by_event = {row.id: row.values.get(cfg.y_feature) for row in opens.rows}
    encoder_full = fit_encoder(support)

    rows, em_histories, all_rankings, selections = [], {}, {}, {}
    for run in range(cfg.n_runs):
        seeds = np.random.SeedSequence((cfg.master_seed, run)).generate_state(4)
        split_seed, resample_seed, select_seed, model_seed = (int(s) for s in seeds)
        rng = np.random.default_rng(split_seed)
        n_test = max(1, int(round(cfg.test_fraction * len(linked))))
        test_events = sorted(
            str(e) for e in rng.choice(np.array(linked), size=n_test, replace=False)
        )
        test_set = set(test_events)
        train_events = [e for e in linked if e not in test_set]
        assembly = assemble_training(
            candidates, ground_truth, support, train_events,
            cfg.negative_ratio, resample_seed,
        )
        labeled = (
            _encode_ids(assembly.positive_ids, 1, encoder_full, rows_by_id)
            + _encode_ids(assembly.negative_ids, 0, encoder_full, rows_by_id)
        )
        labeled = resample(labeled, cfg.resample_strategy, cfg.resample_ratio,
                           resample_seed)
        if cfg.top_k_features and cfg.top_k_features < len(encoder_full.feature_names):
            sel_model = fit(_SELECTION_CONFIG, labeled, select_seed)
            selected = [
                name for name, _ in feature_importance(
                    sel_model, encoder_full, cfg.top_k_features,
                )
            ]
            encoder = fit_encoder(support, feature_names=selected)
            labeled = _reencode(labeled, encoder, rows_by_id)
        else:
            selected = list(encoder_full.feature_names)
            encoder = encoder_full
        unlabeled = _encode_ids(assembly.unlabeled_ids, -1, encoder, rows_by_id)
        model, history = em_train(
            labeled, unlabeled, cfg.ensemble, cfg.em, valid=None, seed=model_seed,
        )
        rank_features = list(cfg.ranking_features or selected)
        rank_ds = _ranking_dataset(
            train_events, ground_truth, rows_by_id, support,
            rank_features, cfg.y_feature, damage_by_event,
        )
        cond = fit_cond_prob(
            rank_ds, cfg.y_feature, rank_features,
            smoothing=cfg.ranking_smoothing, y_bins=cfg.y_bins,
        )
        run_rankings = {}
        for e in test_events:
            pairs = candidates[e]
            if not pairs:
                continue
            recs = [rows_by_id[p.support_id] for p in pairs]
            X = np.stack([encoder.transform_record(rec) for rec in recs])
            probs = predict_proba_any(model, X)
            survivors = [rec for rec, p in zip(recs, probs) if p >= 0.5]
            if not survivors:
                continue
            run_rankings[e] = rank_candidates(
                cond, damage_by_event[e], survivors, cfg.top_n,
            )
        row = evaluate_topn(run_rankings, ground_truth, cfg.top_n,
                            test_size=len(test_events))
        rows.append({"run": run, **row})
        em_histories[run] = history
        all_rankings[run] = run_rankings
        selections[run] = selected

    mean_accuracy = float(np.mean([row["accuracy"] for row in rows]))
    return EstimationReport(
        config=cfg.to_dict(),
        rows=rows,
        mean_accuracy=mean_accuracy,
        top_n=cfg.top_n,
        candidates=candidates,
        em_history=em_histories,
        rankings=all_rankings,
        selected_features=selections,
    )
