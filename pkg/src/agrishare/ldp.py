"""Local differential privacy: sensitivity, budget allocation, Laplace noise.

Each participant perturbs its projected rows locally before anything leaves
the premises. The privacy budget epsilon is split across components in
proportion to their sensitivities, which makes every component's Laplace
scale equal to sum(sensitivities) / epsilon.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import audit
from .errors import AgriShareError, DataError, FingerprintMismatch
from .pca import SENSITIVITY_FLOOR, PcaModel, TransformedMatrix, pca_transform

_REL_TOL = 1e-9


def compute_sensitivity(model: PcaModel, reference) -> np.ndarray:
    """Per-component sensitivity from a public reference table.

    The worst-case change a substitution can cause in one projected
    component, estimated over the reference as (column max - column min);
    for any pair x, x' in the reference this bounds |proj(x)_i - proj(x')_i|
    exactly. Floored so degenerate components never yield a zero Laplace
    scale. The true sensitivity over unbounded inputs does not exist for a
    linear projection, so the published reference is the usable proxy.
    """
    if reference.n < 1:
        raise AgriShareError("reference data must be non-empty")
    projected = pca_transform(model, reference).rows
    return np.maximum(projected.max(axis=0) - projected.min(axis=0), SENSITIVITY_FLOOR)


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    per_component: np.ndarray

    def __post_init__(self):
        if self.epsilon <= 0:
            raise AgriShareError("epsilon must be positive")
        pc = np.asarray(self.per_component, dtype=np.float64)
        if np.any(pc <= 0):
            raise AgriShareError("per-component budgets must be positive")
        if abs(pc.sum() - self.epsilon) > _REL_TOL * self.epsilon:
            raise AgriShareError("per-component budgets must sum to epsilon")


def allocate_epsilon(total: float, sensitivities: np.ndarray) -> PrivacyBudget:
    """Split `total` across components proportionally to sensitivity."""
    if total <= 0:
        raise AgriShareError("total epsilon must be positive")
    s = np.asarray(sensitivities, dtype=np.float64)
    if np.any(s <= 0):
        raise AgriShareError("sensitivities must be positive")
    return PrivacyBudget(epsilon=float(total), per_component=total * s / s.sum())


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    """One inverse-CDF draw from Laplace(0, scale)."""
    if scale <= 0:
        raise AgriShareError("scale must be positive")
    return float(laplace_matrix(scale, (1,), rng)[0])


def laplace_matrix(scale, shape, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF Laplace draws; `scale` may be scalar or per-column vector.

    u is uniform on (-0.5, 0.5); the log argument is floored at the smallest
    positive double so the measure-zero edge u = -0.5 cannot produce inf.
    """
    u = rng.random(shape) - 0.5
    mag = np.log(np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(np.float64).tiny))
    return -np.asarray(scale, dtype=np.float64) * np.sign(u) * mag


@dataclass(frozen=True)
class NoisyMatrix:
    """A participant's privatized share (C_i): projected rows plus noise."""

    rows: np.ndarray
    epsilon: float
    model_fingerprint: str

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def k(self) -> int:
        return self.rows.shape[1]


def privatize(
    transformed: TransformedMatrix,
    sensitivities: np.ndarray,
    budget: PrivacyBudget,
    rng: np.random.Generator,
) -> NoisyMatrix:
    """Add one fresh Laplace draw per cell, scale_i = s_i / eps_i.

    The budget must be the proportional allocation for these sensitivities;
    anything else would silently change the advertised epsilon.
    """
    s = np.asarray(sensitivities, dtype=np.float64)
    if s.shape != (transformed.k,):
        raise AgriShareError("sensitivity vector length != component count")
    expected = allocate_epsilon(budget.epsilon, s).per_component
    if not np.allclose(budget.per_component, expected, rtol=_REL_TOL, atol=0.0):
        raise AgriShareError("budget does not match the proportional allocation for s")
    scales = s / budget.per_component
    noisy = transformed.rows + laplace_matrix(scales, transformed.rows.shape, rng)
    return NoisyMatrix(rows=noisy, epsilon=budget.epsilon, model_fingerprint=transformed.model_fingerprint)


# ---------------------------------------------------------------------------
# share files: CSV with a one-line JSON header comment
# ---------------------------------------------------------------------------

def _write_headed_csv(rows: np.ndarray, meta: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    k = rows.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(",".join(f"pc{i + 1}" for i in range(k)) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _read_headed_csv(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise DataError(f"{path}: missing JSON header comment")
        meta = json.loads(first[2:])
        header = fh.readline().strip().split(",")
        k = len(header)
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals = [float(v) for v in line.split(",")]
            if len(vals) != k:
                raise DataError(f"{path}: ragged row")
            rows.append(vals)
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), k)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite entry")
    return arr, meta


def save_noisy_csv(share: NoisyMatrix, path) -> None:
    meta = {"kind": "noisy", "epsilon": share.epsilon, "fingerprint": share.model_fingerprint,
            "k": share.k}
    _write_headed_csv(share.rows, meta, path)


def load_noisy_csv(path) -> NoisyMatrix:
    rows, meta = _read_headed_csv(path)
    if meta.get("kind") != "noisy":
        raise DataError(f"{path}: not a noisy share file")
    audit.record(audit.SHARE_READ, str(path))
    return NoisyMatrix(rows=rows, epsilon=float(meta["epsilon"]), model_fingerprint=meta["fingerprint"])


def save_transformed_csv(tm: TransformedMatrix, path) -> None:
    meta = {"kind": "transformed", "fingerprint": tm.model_fingerprint, "k": tm.k}
    _write_headed_csv(tm.rows, meta, path)


def load_transformed_csv(path, expected_fingerprint: str | None = None) -> TransformedMatrix:
    rows, meta = _read_headed_csv(path)
    if meta.get("kind") != "transformed":
        raise DataError(f"{path}: not a transformed-matrix file")
    tm = TransformedMatrix(rows=rows, model_fingerprint=meta["fingerprint"])
    if expected_fingerprint is not None and tm.model_fingerprint != expected_fingerprint:
        raise FingerprintMismatch(f"{path}: fingerprint {tm.model_fingerprint} != {expected_fingerprint}")
    return tm
