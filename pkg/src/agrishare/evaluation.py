"""Privacy power analysis and utility measurement across epsilon sweeps.

Power measures membership inference: an attacker flags a row as a member
when its minimum distance to the shared noisy matrix falls below a
threshold calibrated on non-member controls at a fixed false-positive
rate. Utility compares classifier accuracy on privatized rows against
noise-free cluster labels.
"""

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import split_indices
from .errors import AgriShareError, FingerprintMismatch
from .ldp import NoisyMatrix
from .models import (
    LOGREG_DEFAULTS,
    SVM_DEFAULTS,
    TrainConfig,
    accuracy,
    predict,
    train_gnb,
    train_logreg,
    train_svm,
)
from .pca import TransformedMatrix
from .pipeline import Pipeline
from .sandbox import ClusterModel, assign_rows, kmeans_fit_rows, stacked_rows

DEFAULT_FPR = 0.05
DEFAULT_POOL = 200
TABLE4_EPSILONS = {"logreg": 25.0, "gnb": 35.0, "svm": 35.0}
POWER_SWEEP_GLOBAL_FRACTION = 0.9

CLASSIFIER_TRAINERS = {
    "logreg": lambda X, y, seed: train_logreg(X, y, replace(LOGREG_DEFAULTS, seed=seed)),
    "gnb": lambda X, y, seed: train_gnb(X, y),
    "svm": lambda X, y, seed: train_svm(X, y, replace(SVM_DEFAULTS, seed=seed)),
}


@dataclass(frozen=True)
class PowerConfig:
    fpr: float = DEFAULT_FPR
    n_control: int = DEFAULT_POOL
    n_case: int = DEFAULT_POOL
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.fpr < 1.0:
            raise AgriShareError("fpr must lie in (0, 1)")
        if self.n_control < 1 or self.n_case < 1:
            raise AgriShareError("pool sizes must be positive")


@dataclass(frozen=True)
class PowerReport:
    epsilon: float
    threshold: float
    power: float
    n_control: int
    n_case: int


def _min_distances(points: np.ndarray, shared: np.ndarray) -> np.ndarray:
    deltas = points[:, None, :] - shared[None, :, :]
    return np.sqrt((deltas ** 2).sum(axis=2)).min(axis=1)


def power_analysis(
    shared: NoisyMatrix,
    case_pool: TransformedMatrix,
    control_pool: TransformedMatrix,
    cfg: PowerConfig,
) -> PowerReport:
    """Membership-inference power at a fixed false-positive rate.

    Controls come from the sandbox global pool (non-members); cases are the
    participant's pre-noise projections whose noisy rows sit in `shared`.
    The threshold is the ascending cfg.fpr quantile of control distances:
    exactly ceil(fpr * n_control) controls fall at or below it. Power is
    the fraction of case distances at or below the threshold.
    """
    if case_pool.model_fingerprint != shared.model_fingerprint:
        raise FingerprintMismatch("case pool and shared matrix use different models")
    if control_pool.model_fingerprint != shared.model_fingerprint:
        raise FingerprintMismatch("control pool and shared matrix use different models")
    if case_pool.n < 1 or control_pool.n < 1:
        raise AgriShareError("pools must be non-empty")
    if case_pool.k != shared.k or control_pool.k != shared.k:
        raise AgriShareError("pools and shared matrix must share component space")
    rng = np.random.default_rng(cfg.seed)
    n_control = min(cfg.n_control, control_pool.n)
    n_case = min(cfg.n_case, case_pool.n)
    control = control_pool.rows[rng.choice(control_pool.n, size=n_control, replace=False)]
    case = case_pool.rows[rng.choice(case_pool.n, size=n_case, replace=False)]

    control_dist = np.sort(_min_distances(control, shared.rows))
    case_dist = _min_distances(case, shared.rows)
    m = int(np.ceil(cfg.fpr * n_control))
    threshold = float(control_dist[m - 1])
    at_or_below = int((control_dist <= threshold).sum())
    # ties would silently shift the realized false-positive rate
    if at_or_below != m:
        raise AgriShareError(
            f"threshold calibration hit a tie: {at_or_below} controls <= threshold, expected {m}"
        )
    power = float((case_dist <= threshold).mean())
    return PowerReport(epsilon=shared.epsilon, threshold=threshold, power=power,
                       n_control=n_control, n_case=n_case)


# ---------------------------------------------------------------------------
# utility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UtilityConfig:
    seed: int = 0
    test_fraction: float = 0.2
    train_on_noisy: bool = False


@dataclass(frozen=True)
class UtilityReport:
    epsilon: float
    classifier: str
    accuracy_noisy: float
    accuracy_clean: float


def utility_accuracy(
    clean: TransformedMatrix,
    noisy: NoisyMatrix,
    cluster_model: ClusterModel,
    classifier_kind: str,
    cfg: UtilityConfig,
) -> UtilityReport:
    """Classifier accuracy against noise-free cluster labels.

    Ground truth for every record is its clean row's cluster. The classifier
    trains on the train split (clean rows by default; privatized rows with
    cfg.train_on_noisy) and is scored on both versions of the test rows.
    """
    if classifier_kind not in CLASSIFIER_TRAINERS:
        raise AgriShareError(f"unknown classifier {classifier_kind!r}")
    if clean.model_fingerprint != noisy.model_fingerprint:
        raise FingerprintMismatch("clean and noisy matrices use different models")
    if clean.n != noisy.n:
        raise AgriShareError("clean and noisy matrices must be row-aligned")
    labels = assign_rows(cluster_model, clean.rows)
    if len(set(labels.tolist())) < 2:
        raise AgriShareError("degenerate clustering: all rows in one cluster")
    train_idx, test_idx = split_indices(labels, cfg.test_fraction, cfg.seed)
    train_X = noisy.rows[train_idx] if cfg.train_on_noisy else clean.rows[train_idx]
    model = CLASSIFIER_TRAINERS[classifier_kind](train_X, labels[train_idx], cfg.seed)
    return UtilityReport(
        epsilon=noisy.epsilon,
        classifier=classifier_kind,
        accuracy_noisy=accuracy(model, noisy.rows[test_idx], labels[test_idx]),
        accuracy_clean=accuracy(model, clean.rows[test_idx], labels[test_idx]),
    )


def utility_predictions(clean, noisy, cluster_model, classifier_kind, cfg):
    """Test-split predictions on noisy and clean rows, for exactness checks."""
    labels = assign_rows(cluster_model, clean.rows)
    train_idx, test_idx = split_indices(labels, cfg.test_fraction, cfg.seed)
    train_X = noisy.rows[train_idx] if cfg.train_on_noisy else clean.rows[train_idx]
    model = CLASSIFIER_TRAINERS[classifier_kind](train_X, labels[train_idx], cfg.seed)
    return predict(model, noisy.rows[test_idx]), predict(model, clean.rows[test_idx])


# ---------------------------------------------------------------------------
# tabled experiments
# ---------------------------------------------------------------------------

def aggregated_cluster_model(pipe: Pipeline) -> ClusterModel:
    """Clusters fitted on the clean aggregated projections (evaluation view)."""
    clean_rows = np.vstack([pipe.transformed[pid].rows for pid in pipe.market_ids])
    return kmeans_fit_rows(clean_rows, pipe.config.clusters, seed=pipe.config.partition_seed)


def aggregated_views(pipe: Pipeline, epsilon: float, seed: int):
    """Row-aligned clean and noisy aggregates across all markets."""
    clean_rows = np.vstack([pipe.transformed[pid].rows for pid in pipe.market_ids])
    noisy_rows = np.vstack([pipe.make_share(pid, epsilon, seed).rows for pid in pipe.market_ids])
    clean = TransformedMatrix(rows=clean_rows, model_fingerprint=pipe.model.fingerprint)
    noisy = NoisyMatrix(rows=noisy_rows, epsilon=epsilon, model_fingerprint=pipe.model.fingerprint)
    return clean, noisy


def centralized_accuracy(data, classifier_kind: str, seed: int,
                         test_fraction: float = 0.2) -> float:
    """Baseline arm: the classifier on pooled raw rows with true labels,
    standardized on the train split."""
    labels = data.label_array()
    train_idx, test_idx = split_indices(labels, test_fraction, seed)
    mu = data.rows[train_idx].mean(axis=0)
    sd = data.rows[train_idx].std(axis=0)
    sd[sd == 0] = 1.0
    train_X = (data.rows[train_idx] - mu) / sd
    test_X = (data.rows[test_idx] - mu) / sd
    model = CLASSIFIER_TRAINERS[classifier_kind](train_X, labels[train_idx], seed)
    return accuracy(model, test_X, labels[test_idx])


def table4_experiment(
    data,
    pipe: Pipeline,
    seeds: list[int],
    epsilons: dict[str, float] | None = None,
) -> tuple[list[UtilityReport], float, list[dict]]:
    """Centralized-vs-privatized accuracy table at per-classifier epsilons.

    The centralized arm trains on pooled raw rows with true labels. The
    privacy-protected arm trains on the privatized aggregated projections
    against noise-free cluster labels and is scored on privatized test
    rows. Reports carry the per-seed medians; the gap is the mean
    difference between arms in percentage points.
    """
    epsilons = dict(TABLE4_EPSILONS if epsilons is None else epsilons)
    cluster_model = aggregated_cluster_model(pipe)
    rows_out = []
    reports = []
    for kind in sorted(epsilons):
        eps = epsilons[kind]
        central, aggregated = [], []
        for seed in seeds:
            central.append(centralized_accuracy(data, kind, seed))
            clean, noisy = aggregated_views(pipe, eps, seed)
            rep = utility_accuracy(clean, noisy, cluster_model, kind,
                                   UtilityConfig(seed=seed, train_on_noisy=True))
            aggregated.append(rep.accuracy_noisy)
            rows_out.append({"classifier": kind, "seed": seed, "epsilon": eps,
                             "acc_centralized": central[-1], "acc_aggregated": rep.accuracy_noisy})
        reports.append(UtilityReport(
            epsilon=eps, classifier=kind,
            accuracy_noisy=float(np.median(aggregated)),
            accuracy_clean=float(np.median(central)),
        ))
    gap = float(np.mean([r.accuracy_clean - r.accuracy_noisy for r in reports])) * 100.0
    return reports, gap, rows_out


# ---------------------------------------------------------------------------
# epsilon sweeps
# ---------------------------------------------------------------------------

def power_sweep(pipe: Pipeline, epsilons, seeds, cfg: PowerConfig | None = None) -> list[dict]:
    """Power per (epsilon, seed): each market takes a turn as the shared
    matrix, and the per-seed statistic is the median across markets."""
    cfg = cfg or PowerConfig()
    rows = []
    for eps in epsilons:
        for seed in seeds:
            per_market = []
            thresholds = []
            for i, pid in enumerate(pipe.market_ids):
                share = pipe.make_share(pid, eps, seed)
                rep = power_analysis(share, pipe.transformed[pid], pipe.global_transformed,
                                     replace(cfg, seed=cfg.seed + 104729 * seed + i))
                per_market.append(rep.power)
                thresholds.append(rep.threshold)
            rows.append({
                "epsilon": eps,
                "seed": seed,
                "threshold": float(np.median(thresholds)),
                "power": float(np.median(per_market)),
            })
    return rows


def utility_sweep(pipe: Pipeline, epsilons, seeds, classifiers=("logreg", "gnb", "svm"),
                  train_on_noisy: bool = True) -> list[dict]:
    cluster_model = aggregated_cluster_model(pipe)
    rows = []
    for eps in epsilons:
        for seed in seeds:
            clean, noisy = aggregated_views(pipe, eps, seed)
            for kind in classifiers:
                rep = utility_accuracy(clean, noisy, cluster_model, kind,
                                       UtilityConfig(seed=seed, train_on_noisy=train_on_noisy))
                rows.append({"epsilon": eps, "seed": seed, "classifier": kind,
                             "acc_noisy": rep.accuracy_noisy, "acc_clean": rep.accuracy_clean})
    return rows


def median_by_epsilon(rows: list[dict], value_key: str) -> list[dict]:
    """(epsilon, median, q25, q75) aggregation, sorted by epsilon."""
    by_eps: dict[float, list[float]] = {}
    for row in rows:
        by_eps.setdefault(float(row["epsilon"]), []).append(float(row[value_key]))
    out = []
    for eps in sorted(by_eps):
        vals = np.array(by_eps[eps])
        out.append({"epsilon": eps, "median": float(np.median(vals)),
                    "q25": float(np.quantile(vals, 0.25)), "q75": float(np.quantile(vals, 0.75))})
    return out


def write_csv(rows: list[dict], columns: list[str], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
