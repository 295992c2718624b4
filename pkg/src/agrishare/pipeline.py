"""End-to-end pipeline assembly shared by the evaluation harness and CLI.

A pipeline bundles one partition of a labeled dataset into a global
(public) table plus simulated markets, the dimensionality-reduction model
fitted on the global part, and each market's projection. Privatized share
stores can then be rebuilt cheaply for any epsilon and noise seed.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import DataMatrix, PartitionSpec, partition_markets, standardize_rows
from .ldp import NoisyMatrix, allocate_epsilon, privatize
from .pca import PcaModel, TransformedMatrix, pca_fit, pca_transform
from .sandbox import AggregatedStore, ParticipantShare, submit_share


@dataclass(frozen=True)
class PipelineConfig:
    n_markets: int = 5
    global_fraction: float = 1.0 / 3.0
    k: int = 2
    clusters: int = 4
    partition_seed: int = 11
    stratify: bool = False


@dataclass
class Pipeline:
    config: PipelineConfig
    model: PcaModel
    global_data: DataMatrix
    global_transformed: TransformedMatrix
    markets: dict[str, DataMatrix] = field(default_factory=dict)
    transformed: dict[str, TransformedMatrix] = field(default_factory=dict)

    @property
    def market_ids(self) -> list[str]:
        return sorted(self.markets)

    def raw_arrays(self, pid: str) -> tuple[np.ndarray, np.ndarray]:
        """A market's standardized features and labels, for client-side training."""
        m = self.markets[pid]
        return standardize_rows(self.model.standardizer, m.rows), m.label_array()

    def share_rng(self, epsilon: float, seed: int, pid: str) -> np.random.Generator:
        index = self.market_ids.index(pid)
        return np.random.default_rng((seed, index, int(epsilon * 1e6) % (2 ** 63)))

    def make_share(self, pid: str, epsilon: float, seed: int) -> NoisyMatrix:
        budget = allocate_epsilon(epsilon, self.model.sensitivities)
        return privatize(self.transformed[pid], self.model.sensitivities, budget,
                         self.share_rng(epsilon, seed, pid))

    def make_store(self, epsilon: float, seed: int) -> AggregatedStore:
        """Privatize every market at `epsilon` and aggregate."""
        store = AggregatedStore(model_fingerprint=self.model.fingerprint)
        for pid in self.market_ids:
            submit_share(store, ParticipantShare(pid, self.make_share(pid, epsilon, seed)))
        return store

    def noiseless_store(self) -> AggregatedStore:
        """Shares without noise, for epsilon-to-infinity comparisons."""
        store = AggregatedStore(model_fingerprint=self.model.fingerprint)
        for pid in self.market_ids:
            tm = self.transformed[pid]
            submit_share(store, ParticipantShare(
                pid, NoisyMatrix(rows=tm.rows.copy(), epsilon=float("inf"),
                                 model_fingerprint=tm.model_fingerprint)))
        return store


def build_pipeline(data: DataMatrix, config: PipelineConfig) -> Pipeline:
    spec = PartitionSpec(
        n_markets=config.n_markets,
        global_fraction=config.global_fraction,
        seed=config.partition_seed,
        stratify_by_label=config.stratify,
    )
    global_data, market_list = partition_markets(data, spec)
    model = pca_fit(global_data, config.k)
    pipe = Pipeline(
        config=config,
        model=model,
        global_data=global_data,
        global_transformed=pca_transform(model, global_data),
    )
    for i, market in enumerate(market_list):
        pid = f"market_{i}"
        pipe.markets[pid] = market
        pipe.transformed[pid] = pca_transform(model, market)
    return pipe
