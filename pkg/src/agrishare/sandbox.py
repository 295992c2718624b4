"""Sandbox aggregation, clustering and collaborator recommendation.

The sandbox only ever holds privatized shares. Mutation (share submission)
is single-writer; every query below is read-only and deterministic.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AgriShareError, DataError, FingerprintMismatch
from .ldp import NoisyMatrix, load_noisy_csv, save_noisy_csv

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class ParticipantShare:
    participant_id: str
    matrix: NoisyMatrix

    def __post_init__(self):
        if not self.participant_id:
            raise AgriShareError("participant_id must be non-empty")


@dataclass
class AggregatedStore:
    model_fingerprint: str
    shares: dict[str, NoisyMatrix] = field(default_factory=dict)

    @property
    def participant_ids(self) -> list[str]:
        return sorted(self.shares)

    @property
    def total_rows(self) -> int:
        return sum(m.n for m in self.shares.values())


def submit_share(store: AggregatedStore, share: ParticipantShare) -> AggregatedStore:
    if share.participant_id in store.shares:
        raise AgriShareError(f"duplicate participant id {share.participant_id!r}")
    if share.matrix.model_fingerprint != store.model_fingerprint:
        raise FingerprintMismatch(
            f"share {share.participant_id!r} was built under model "
            f"{share.matrix.model_fingerprint}, store expects {store.model_fingerprint}"
        )
    ks = {m.k for m in store.shares.values()}
    if ks and share.matrix.k not in ks:
        raise AgriShareError("share component count differs from store contents")
    store.shares[share.participant_id] = share.matrix
    return store


def stacked_rows(store: AggregatedStore) -> tuple[np.ndarray, list[tuple[str, int]]]:
    """All rows in participant-id order plus (participant, local row) provenance."""
    if not store.shares:
        raise AgriShareError("store is empty")
    blocks, prov = [], []
    for pid in store.participant_ids:
        m = store.shares[pid]
        blocks.append(m.rows)
        prov.extend((pid, i) for i in range(m.n))
    return np.vstack(blocks), prov


# ---------------------------------------------------------------------------
# K-Means
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    c: int
    inertia: float
    seed: int


def _plusplus_init(rows: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = rows.shape[0]
    centroids = np.empty((c, rows.shape[1]))
    centroids[0] = rows[rng.integers(n)]
    d2 = ((rows - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, c):
        total = d2.sum()
        if total <= 0.0:
            centroids[j] = rows[rng.integers(n)]
        else:
            centroids[j] = rows[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((rows - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(rows: np.ndarray, centroids: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray, float]:
    prev_assign = None
    prev_inertia = np.inf
    for _ in range(max_iter):
        d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(len(rows)), assign].sum())
        # Lloyd steps may never increase the objective
        assert inertia <= prev_inertia + 1e-9 * max(1.0, prev_inertia)
        prev_inertia = inertia
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
        for j in range(centroids.shape[0]):
            members = rows[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the farthest point
                far = int(d2.min(axis=1).argmax())
                centroids[j] = rows[far]
    d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(rows)), assign].sum())
    return centroids, assign, inertia


def kmeans_fit(store: AggregatedStore, c: int, seed: int) -> ClusterModel:
    """Lloyd's algorithm, best of KMEANS_RESTARTS seeded ++ initializations."""
    rows, _ = stacked_rows(store)
    return kmeans_fit_rows(rows, c, seed)


def kmeans_fit_rows(rows: np.ndarray, c: int, seed: int) -> ClusterModel:
    if c < 1:
        raise AgriShareError("cluster count must be >= 1")
    if rows.shape[0] < c:
        raise AgriShareError(f"need at least {c} rows to fit {c} clusters")
    best = None
    for restart in range(KMEANS_RESTARTS):
        rng = np.random.default_rng((seed, restart))
        centroids = _plusplus_init(rows, c, rng)
        centroids, _, inertia = _lloyd(rows.copy(), centroids, KMEANS_MAX_ITER)
        if best is None or inertia < best[1]:
            best = (centroids, inertia)
    return ClusterModel(centroids=best[0], c=c, inertia=best[1], seed=seed)


def kmeans_assign(model: ClusterModel, point: np.ndarray) -> int:
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (model.centroids.shape[1],):
        raise AgriShareError("point dimension does not match centroids")
    d2 = ((model.centroids - point) ** 2).sum(axis=1)
    return int(d2.argmin())  # argmin takes the lowest index on ties


def assign_rows(model: ClusterModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    d2 = ((rows[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


# ---------------------------------------------------------------------------
# recommendation and similarity queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Recommendation:
    query_label: int
    neighbors: tuple[tuple[str, int, float], ...]  # (participant, local row, distance)


def recommend_collaborators(
    store: AggregatedStore,
    cluster_model: ClusterModel,
    profile: np.ndarray,
    m: int,
) -> Recommendation:
    """Up to m nearest aggregated rows sharing the profile's cluster label."""
    if m < 1:
        raise AgriShareError("m must be >= 1")
    rows, prov = stacked_rows(store)
    label = kmeans_assign(cluster_model, profile)
    labels = assign_rows(cluster_model, rows)
    mask = labels == label
    candidates = rows[mask]
    cand_prov = [p for p, keep in zip(prov, mask) if keep]
    dist = np.sqrt(((candidates - np.asarray(profile, dtype=np.float64)) ** 2).sum(axis=1))
    order = sorted(range(len(dist)), key=lambda i: (dist[i], cand_prov[i][0], cand_prov[i][1]))
    picked = order[:m]
    return Recommendation(
        query_label=label,
        neighbors=tuple((cand_prov[i][0], cand_prov[i][1], float(dist[i])) for i in picked),
    )


def _participant_rows(store: AggregatedStore, pid: str) -> np.ndarray:
    if pid not in store.shares:
        raise AgriShareError(f"unknown participant {pid!r}")
    return store.shares[pid].rows


def market_similarity_profile(
    store: AggregatedStore, cluster_model: ClusterModel, a: str, b: str
) -> float:
    """Distance between two participants' mean vectors in component space."""
    ra, rb = _participant_rows(store, a), _participant_rows(store, b)
    if cluster_model is not None and cluster_model.centroids.shape[1] != ra.shape[1]:
        raise AgriShareError("cluster model dimension != share dimension")
    return float(np.linalg.norm(ra.mean(axis=0) - rb.mean(axis=0)))


def market_similarity_distribution(store: AggregatedStore, a: str, b: str) -> float:
    """Summed per-component 2-Wasserstein distance between Gaussian fits.

    For each component the distance is sqrt((mu_a - mu_b)^2 + (sd_a - sd_b)^2),
    which is symmetric, non-negative, zero on identical inputs and sensitive
    to both location and spread.
    """
    ra, rb = _participant_rows(store, a), _participant_rows(store, b)
    if ra.shape[0] < 2 or rb.shape[0] < 2:
        raise AgriShareError("distribution similarity needs >= 2 rows per participant")
    mu_a, mu_b = ra.mean(axis=0), rb.mean(axis=0)
    sd_a, sd_b = ra.std(axis=0), rb.std(axis=0)
    return float(np.sqrt((mu_a - mu_b) ** 2 + (sd_a - sd_b) ** 2).sum())


def select_collaborators(
    store: AggregatedStore, initiator: str, m: int, mode: str
) -> list[str]:
    """The m most similar participants to `initiator`, ascending distance.

    mode 'profile' compares mean vectors; 'distribution' compares per-
    component Gaussian fits. Ties break on participant id.
    """
    if mode not in ("profile", "distribution"):
        raise AgriShareError(f"unknown similarity mode {mode!r}")
    if initiator not in store.shares:
        raise AgriShareError(f"unknown initiator {initiator!r}")
    others = [p for p in store.participant_ids if p != initiator]
    if len(others) < m:
        raise AgriShareError(f"need at least {m} other participants, have {len(others)}")
    if mode == "profile":
        dist = {p: market_similarity_profile(store, None, initiator, p) for p in others}
    else:
        dist = {p: market_similarity_distribution(store, initiator, p) for p in others}
    ranked = sorted(others, key=lambda p: (dist[p], p))
    return ranked[:m]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_store(store: AggregatedStore, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "fingerprint": store.model_fingerprint,
        "participant_ids": store.participant_ids,
        "row_counts": {pid: store.shares[pid].n for pid in store.participant_ids},
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    for pid in store.participant_ids:
        save_noisy_csv(store.shares[pid], directory / f"{pid}.csv")


def load_store(directory) -> AggregatedStore:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no store manifest at {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    store = AggregatedStore(model_fingerprint=manifest["fingerprint"])
    for pid in manifest["participant_ids"]:
        share = load_noisy_csv(directory / f"{pid}.csv")
        if share.n != manifest["row_counts"][pid]:
            raise DataError(f"store {pid}: row count differs from manifest")
        submit_share(store, ParticipantShare(pid, share))
    return store


def recommendation_to_json(rec: Recommendation) -> dict:
    return {
        "query_label": rec.query_label,
        "neighbors": [
            {"participant": pid, "row": row, "distance": dist}
            for pid, row, dist in rec.neighbors
        ],
    }
