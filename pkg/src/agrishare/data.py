"""Dataset ingestion, standardization, market partitioning and synthetic data.

Two table layouts are built in: a crop survey (7 numeric soil/climate
features plus a crop label) and a farmer's-market vendor survey (distance,
nine binary vendor-type flags, sales, visitors; unlabeled). Real CSVs with
either layout load through :func:`load_csv`; when no real file is
available, seeded generators produce stand-ins with the same schemas.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import audit
from .errors import DataError


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature columns plus an optional label column."""

    feature_names: tuple[str, ...]
    label_name: str | None = None

    def __post_init__(self):
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names must be unique")
        if self.label_name is not None and self.label_name in self.feature_names:
            raise DataError("label column may not also be a feature column")
        if not self.feature_names:
            raise DataError("schema needs at least one feature")

    @property
    def feature_count(self) -> int:
        return len(self.feature_names)


CROP_SCHEMA = FeatureSchema(
    feature_names=("N", "P", "K", "temperature", "humidity", "ph", "rainfall"),
    label_name="label",
)

MARKET_SCHEMA = FeatureSchema(
    feature_names=(
        "miles_from_market",
        "vendor_fruits_vegetables",
        "vendor_meat_seafood",
        "vendor_dairy",
        "vendor_eggs",
        "vendor_plants_flowers",
        "vendor_nuts_legumes",
        "vendor_value_added",
        "vendor_prepared_food",
        "vendor_crafts_art_services",
        "sales",
        "visitors",
    ),
)


@dataclass
class DataMatrix:
    """Dense numeric table with a schema and optional categorical labels."""

    schema: FeatureSchema
    rows: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise DataError("rows must be a 2-D array")
        if self.rows.shape[1] != self.schema.feature_count:
            raise DataError(
                f"row width {self.rows.shape[1]} != schema width {self.schema.feature_count}"
            )
        if self.rows.size and not np.all(np.isfinite(self.rows)):
            raise DataError("non-finite value in data matrix")
        if self.labels is not None:
            self.labels = tuple(str(v) for v in self.labels)
            if len(self.labels) != self.rows.shape[0]:
                raise DataError("label count != row count")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def feature_count(self) -> int:
        return self.rows.shape[1]

    def take(self, idx) -> "DataMatrix":
        """Row subset by index array, labels carried along."""
        idx = np.asarray(idx, dtype=np.int64)
        labels = tuple(self.labels[i] for i in idx) if self.labels is not None else None
        return DataMatrix(self.schema, self.rows[idx], labels)

    def label_array(self) -> np.ndarray:
        if self.labels is None:
            raise DataError("matrix has no labels")
        return np.array(self.labels)


def load_csv(path, schema: FeatureSchema) -> DataMatrix:
    """Read a CSV whose header matches `schema` (order-insensitive).

    Raises DataError for a missing file, header mismatch (reporting the
    missing/extra columns), an unparsable cell (reporting row and column),
    or a file with no data rows.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    audit.record(audit.RAW_READ, str(path))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {path}") from None
        header = [h.strip() for h in header]
        expected = set(schema.feature_names) | ({schema.label_name} if schema.label_name else set())
        got = set(header)
        if got != expected:
            missing = sorted(expected - got)
            extra = sorted(got - expected)
            raise DataError(f"header mismatch in {path}: missing={missing} extra={extra}")
        col = {name: header.index(name) for name in header}
        feat_idx = [col[name] for name in schema.feature_names]
        label_idx = col[schema.label_name] if schema.label_name else None

        rows, labels = [], []
        for r, rec in enumerate(reader, start=2):  # 1-based, header is line 1
            if len(rec) != len(header):
                raise DataError(f"{path}:{r}: expected {len(header)} cells, got {len(rec)}")
            vals = []
            for j, name in zip(feat_idx, schema.feature_names):
                try:
                    v = float(rec[j])
                except ValueError:
                    raise DataError(f"{path}:{r}: column '{name}' value {rec[j]!r} is not numeric") from None
                if not np.isfinite(v):
                    raise DataError(f"{path}:{r}: column '{name}' is non-finite")
                vals.append(v)
            rows.append(vals)
            if label_idx is not None:
                labels.append(rec[label_idx])
    if not rows:
        raise DataError(f"empty dataset: {path} has a header but no rows")
    return DataMatrix(schema, np.array(rows), tuple(labels) if labels else None)


def save_csv(data: DataMatrix, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = list(data.schema.feature_names)
        if data.schema.label_name and data.labels is not None:
            header.append(data.schema.label_name)
        writer.writerow(header)
        for i in range(data.n):
            rec = [repr(float(v)) for v in data.rows[i]]
            if data.schema.label_name and data.labels is not None:
                rec.append(data.labels[i])
            writer.writerow(rec)


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StandardizerParams:
    """Per-column center and scale. Scale is the population (1/n) std;
    zero-variance columns get scale 1 so constant features stay harmless."""

    means: np.ndarray
    scales: np.ndarray


def fit_standardizer(data: DataMatrix) -> StandardizerParams:
    if data.n < 2:
        raise DataError("standardizer needs at least 2 rows")
    means = data.rows.mean(axis=0)
    scales = data.rows.std(axis=0)  # population convention, ddof=0
    scales = np.where(scales > 0.0, scales, 1.0)
    return StandardizerParams(means=means, scales=scales)


def apply_standardizer(params: StandardizerParams, data: DataMatrix) -> DataMatrix:
    if data.feature_count != len(params.means):
        raise DataError("standardizer dimension mismatch")
    out = (data.rows - params.means) / params.scales
    return DataMatrix(data.schema, out, data.labels)


def invert_standardizer(params: StandardizerParams, data: DataMatrix) -> DataMatrix:
    if data.feature_count != len(params.means):
        raise DataError("standardizer dimension mismatch")
    return DataMatrix(data.schema, data.rows * params.scales + params.means, data.labels)


def standardize_rows(params: StandardizerParams, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    return (rows - params.means) / params.scales


# ---------------------------------------------------------------------------
# partitioning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionSpec:
    """How to split one table into a global set plus simulated markets."""

    n_markets: int
    global_fraction: float
    seed: int
    stratify_by_label: bool = False

    def __post_init__(self):
        if self.n_markets < 1:
            raise DataError("n_markets must be >= 1")
        if not 0.0 < self.global_fraction < 1.0:
            raise DataError("global_fraction must lie in (0, 1)")


def _largest_remainder(quota: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation summing exactly to `total`, proportional to quota."""
    base = np.floor(quota).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(quota - base), kind="stable")
        base[order[:short]] += 1
    return base


def partition_indices(n: int, labels, spec: PartitionSpec) -> tuple[np.ndarray, list[np.ndarray]]:
    """Row-index form of the partition; disjoint cover of range(n).

    The global part gets exactly floor(global_fraction * n) rows. Market
    sizes are intentionally uneven: each label's remaining rows go to
    markets by seeded Dirichlet weights, so markets end up with genuinely
    different label mixes, mimicking markets that specialize in different
    crops. In stratified mode one shared weight vector keeps label mixes
    proportional across markets; without labels, rows are split by a single
    uneven weight draw.
    """
    if n < spec.n_markets + 1:
        raise DataError(f"need at least n_markets+1={spec.n_markets + 1} rows, have {n}")
    if spec.stratify_by_label and labels is None:
        raise DataError("stratified partition requested but data has no labels")
    rng = np.random.default_rng(spec.seed)
    g_total = int(np.floor(spec.global_fraction * n))

    if labels is None:
        perm = rng.permutation(n)
        gidx, rest = perm[:g_total], perm[g_total:]
        weights = rng.uniform(0.5, 1.5, spec.n_markets)
        sizes = _largest_remainder(weights / weights.sum() * len(rest), len(rest))
        cuts = np.cumsum(sizes)[:-1]
        return np.sort(gidx), [np.sort(m) for m in np.split(rest, cuts)]

    labels = np.asarray(labels)
    uniq = sorted(set(labels.tolist()))
    by_label = {l: rng.permutation(np.flatnonzero(labels == l)) for l in uniq}
    quotas = np.array([spec.global_fraction * len(by_label[l]) for l in uniq])
    g_counts = _largest_remainder(quotas, g_total)

    shared = rng.uniform(0.5, 1.5, spec.n_markets)
    shared = shared / shared.sum()

    gidx: list[np.ndarray] = []
    midx: list[list[np.ndarray]] = [[] for _ in range(spec.n_markets)]
    for l, gc in zip(uniq, g_counts):
        idx = by_label[l]
        gidx.append(idx[:gc])
        rest = idx[gc:]
        if spec.stratify_by_label:
            w = shared
        else:
            w = rng.dirichlet(np.full(spec.n_markets, 0.5))
        sizes = _largest_remainder(w * len(rest), len(rest))
        start = 0
        for j, s in enumerate(sizes):
            midx[j].append(rest[start:start + s])
            start += s
    markets = [np.sort(np.concatenate(parts)) if parts else np.array([], dtype=np.int64)
               for parts in midx]
    return np.sort(np.concatenate(gidx)), markets


def partition_markets(data: DataMatrix, spec: PartitionSpec) -> tuple[DataMatrix, list[DataMatrix]]:
    gidx, midx = partition_indices(data.n, data.labels, spec)
    return data.take(gidx), [data.take(m) for m in midx]


def split_indices(labels, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded stratified train/test split on a label array."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for l in sorted(set(labels.tolist())):
        idx = rng.permutation(np.flatnonzero(labels == l))
        k = int(round(test_fraction * len(idx)))
        test.append(idx[:k])
        train.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def generate_synthetic_market(n: int, seed: int) -> DataMatrix:
    """Seeded vendor-survey stand-in matching MARKET_SCHEMA.

    Distance is lognormal, the nine vendor-type flags are independent
    Bernoulli draws, sales are gamma-distributed and visitors Poisson.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(seed)
    miles = np.round(rng.lognormal(mean=2.6, sigma=0.9, size=n), 2)
    flag_p = np.array([0.45, 0.20, 0.12, 0.18, 0.25, 0.10, 0.30, 0.28, 0.15])
    flags = (rng.random((n, 9)) < flag_p).astype(np.float64)
    sales = np.round(rng.gamma(shape=2.0, scale=160.0, size=n), 2)
    visitors = rng.poisson(lam=120.0, size=n).astype(np.float64)
    rows = np.column_stack([miles, flags, sales, visitors])
    return DataMatrix(MARKET_SCHEMA, rows)


# Crop stand-in layout: 22 crops in four agronomic groups arranged on two
# latent axes (wetness: humidity+rainfall, minerals: P+K). The remaining
# features (N, temperature, ph) identify crops within a group; their values
# sit at octahedral corners so every crop is an extreme point of the class-
# center hull, keeping one-vs-rest linear classifiers viable like on the
# real survey data this imitates.
_GROUP_LATENT = {0: (1.0, -1.0), 1: (-1.0, -1.0), 2: (1.0, 1.0), 3: (-1.0, 1.0)}

# name, group, wet offset, mineral offset, N, temperature, ph
_CROPS = (
    ("rice",        0, +0.6, +0.4, 101.0, 26.50, 6.50),
    ("jute",        0, +0.3, -0.5,  29.0, 26.50, 6.50),
    ("coconut",     0, -0.5, +0.6,  65.0, 32.00, 6.50),
    ("papaya",      0, -0.1, -0.1,  65.0, 21.00, 6.50),
    ("coffee",      0, -0.6, -0.6,  65.0, 26.50, 7.18),
    ("chickpea",    1, +0.6, +0.5,  67.0, 23.50, 6.55),
    ("kidneybeans", 1, -0.6, +0.4,  13.0, 23.50, 6.55),
    ("pigeonpeas",  1, +0.2, -0.4,  40.0, 29.00, 6.55),
    ("lentil",      1, +0.1, +0.6,  40.0, 18.00, 6.55),
    ("mothbeans",   1, -0.2, -0.6,  40.0, 23.50, 7.23),
    ("mungbean",    1, +0.6, -0.1,  40.0, 23.50, 5.87),
    ("blackgram",   1, -0.5, -0.2,  57.0, 27.00, 6.98),
    ("pomegranate", 2, -0.6, -0.5,  18.0, 25.50, 6.20),
    ("banana",      2, +0.5, -0.6,  86.0, 25.50, 6.20),
    ("mango",       2, -0.2, -0.1,  52.0, 31.20, 6.20),
    ("grapes",      2, +0.2, +0.6,  52.0, 19.80, 6.20),
    ("apple",       2, -0.6, +0.4,  52.0, 25.50, 5.54),
    ("orange",      2, +0.6, +0.1,  52.0, 25.50, 6.86),
    ("watermelon",  3, -0.5, -0.5,  92.0, 19.00, 6.55),
    ("muskmelon",   3, +0.4, -0.6,  92.0, 30.00, 6.55),
    ("cotton",      3, -0.2, +0.6, 120.0, 24.50, 6.55),
    ("maize",       3, +0.6, +0.2,  64.0, 24.50, 6.55),
)

_FEATURE_LO = np.array([0.0, 5.0, 5.0, 8.0, 14.0, 3.5, 20.0])
_FEATURE_HI = np.array([140.0, 145.0, 205.0, 44.0, 100.0, 10.0, 300.0])

_GROUP_SCALE = 3.9   # latent distance between group corners
_PATCH_HALF = 2.0    # uniform within-group spread on each latent axis
_OFFSET = 1.2        # per-crop shift inside its group patch


def generate_crop_dataset(n_per_class: int = 100, seed: int = 7) -> DataMatrix:
    """Seeded crop-survey stand-in: n_per_class rows for each of 22 crops."""
    if n_per_class < 1:
        raise DataError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    blocks, labels = [], []
    for name, grp, dw, dm, n_mean, t_mean, ph_mean in _CROPS:
        gw, gm = _GROUP_LATENT[grp]
        wet = gw * _GROUP_SCALE + dw * _OFFSET + rng.uniform(-_PATCH_HALF, _PATCH_HALF, n_per_class)
        mineral = gm * _GROUP_SCALE + dm * _OFFSET + rng.uniform(-_PATCH_HALF, _PATCH_HALF, n_per_class)
        x = np.column_stack([
            n_mean + 4.5 * rng.standard_normal(n_per_class),
            75.0 + 10.0 * mineral + 4.5 * rng.standard_normal(n_per_class),
            105.0 + 14.5 * mineral + 7.0 * rng.standard_normal(n_per_class),
            t_mean + 0.6 * rng.standard_normal(n_per_class),
            57.0 + 6.0 * wet + 2.5 * rng.standard_normal(n_per_class),
            ph_mean + 0.13 * rng.standard_normal(n_per_class),
            160.0 + 19.0 * wet + 10.0 * rng.standard_normal(n_per_class),
        ])
        blocks.append(np.clip(x, _FEATURE_LO, _FEATURE_HI))
        labels += [name] * n_per_class
    rows = np.vstack(blocks)
    labels = np.array(labels)
    perm = rng.permutation(len(labels))
    return DataMatrix(CROP_SCHEMA, rows[perm], tuple(labels[perm]))
