"""Global dimensionality-reduction model shared by all participants.

The researcher fits the model once on a public reference table; every
participant then projects its private rows into the same component space.
Models carry a fingerprint so downstream artifacts from mismatched models
are rejected instead of silently combined.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataMatrix, StandardizerParams, apply_standardizer, fit_standardizer
from .errors import AgriShareError, FingerprintMismatch

MODEL_FORMAT_VERSION = 1
SENSITIVITY_FLOOR = 1e-12


@dataclass(frozen=True)
class PcaModel:
    standardizer: StandardizerParams
    components: np.ndarray       # (k, d), rows orthonormal
    eigenvalues: np.ndarray      # (k,), non-increasing
    sensitivities: np.ndarray    # (k,), per-component range of the reference data
    total_variance: float        # trace of the training covariance, for variance ratios
    fingerprint: str

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def d(self) -> int:
        return self.components.shape[1]


@dataclass(frozen=True)
class TransformedMatrix:
    """Rows projected into the shared component space (a participant's O_i)."""

    rows: np.ndarray
    model_fingerprint: str

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def k(self) -> int:
        return self.rows.shape[1]


def model_fingerprint(standardizer: StandardizerParams, components: np.ndarray) -> str:
    """64-bit hash over a canonical little-endian serialization."""
    k, d = components.shape
    h = hashlib.blake2b(digest_size=8)
    h.update(np.array([MODEL_FORMAT_VERSION, k, d], dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(standardizer.means, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(standardizer.scales, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(components, dtype="<f8").tobytes())
    return h.hexdigest()


def pca_fit(data: DataMatrix, k: int) -> PcaModel:
    """Fit standardizer + top-k principal directions on `data`.

    Covariance uses 1/(n-1). Components follow a deterministic sign
    convention: the entry of largest magnitude in each row is positive.
    Per-component sensitivities are the value ranges of the training data's
    own projections (the public reference), floored at SENSITIVITY_FLOOR.
    """
    if not 1 <= k <= data.feature_count:
        raise AgriShareError(f"k={k} out of range 1..{data.feature_count}")
    if data.n < 2:
        raise AgriShareError("PCA needs at least 2 rows")
    std = fit_standardizer(data)
    z = apply_standardizer(std, data).rows
    cov = np.cov(z, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals = eigvals[order][:k]
    components = eigvecs[:, order][:, :k].T.copy()
    for i in range(k):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    if np.any(eigvals < -1e-10):
        raise AgriShareError("eigensolver produced a significantly negative eigenvalue")
    projected = z @ components.T
    sens = np.maximum(projected.max(axis=0) - projected.min(axis=0), SENSITIVITY_FLOOR)
    return PcaModel(
        standardizer=std,
        components=components,
        eigenvalues=eigvals,
        sensitivities=sens,
        total_variance=float(np.trace(cov)),
        fingerprint=model_fingerprint(std, components),
    )


def pca_transform(model: PcaModel, data: DataMatrix) -> TransformedMatrix:
    if data.feature_count != model.d:
        raise AgriShareError(f"data has {data.feature_count} features, model expects {model.d}")
    z = apply_standardizer(model.standardizer, data).rows
    return TransformedMatrix(rows=z @ model.components.T, model_fingerprint=model.fingerprint)


def project_rows(model: PcaModel, rows: np.ndarray) -> np.ndarray:
    """Project raw feature rows (no DataMatrix wrapper) into component space."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != model.d:
        raise AgriShareError(f"rows have {rows.shape[1]} features, model expects {model.d}")
    z = (rows - model.standardizer.means) / model.standardizer.scales
    return z @ model.components.T


def explained_variance_ratio(model: PcaModel) -> np.ndarray:
    if model.total_variance <= 0:
        raise AgriShareError("model has non-positive total variance")
    return np.clip(model.eigenvalues, 0.0, None) / model.total_variance


def save_model(model: PcaModel, path) -> None:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "k": model.k,
        "d": model.d,
        "means": model.standardizer.means.tolist(),
        "scales": model.standardizer.scales.tolist(),
        "components": model.components.tolist(),
        "eigenvalues": model.eigenvalues.tolist(),
        "sensitivities": model.sensitivities.tolist(),
        "total_variance": model.total_variance,
        "fingerprint": model.fingerprint,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> PcaModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise AgriShareError(f"unsupported model version {doc.get('version')!r}")
    std = StandardizerParams(
        means=np.array(doc["means"], dtype=np.float64),
        scales=np.array(doc["scales"], dtype=np.float64),
    )
    components = np.array(doc["components"], dtype=np.float64)
    model = PcaModel(
        standardizer=std,
        components=components,
        eigenvalues=np.array(doc["eigenvalues"], dtype=np.float64),
        sensitivities=np.array(doc["sensitivities"], dtype=np.float64),
        total_variance=float(doc["total_variance"]),
        fingerprint=doc["fingerprint"],
    )
    recomputed = model_fingerprint(std, components)
    if recomputed != model.fingerprint:
        raise FingerprintMismatch(
            f"model file fingerprint {model.fingerprint} != recomputed {recomputed}"
        )
    return model
