"""Simulated federated averaging over selected collaborator markets.

Collaborators are chosen from privatized shares only (guarded by the access
audit); their raw rows never leave the simulated clients, which exchange
model parameters with the server instead.
"""

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from . import audit
from .errors import AgriShareError
from .models import (
    MLP_HIDDEN,
    ModelParams,
    TrainConfig,
    accuracy,
    mlp_init,
    mlp_loss,
    mlp_train_local,
)
from .sandbox import AggregatedStore, select_collaborators


@dataclass(frozen=True)
class FedConfig:
    rounds: int
    local_epochs: int
    clients: tuple[str, ...]
    train_cfg: TrainConfig
    weighting: str = "by-sample-count"  # or "uniform"

    def __post_init__(self):
        if self.rounds < 1:
            raise AgriShareError("rounds must be >= 1")
        if not self.clients:
            raise AgriShareError("client list must be non-empty")
        if self.weighting not in ("by-sample-count", "uniform"):
            raise AgriShareError(f"unknown weighting {self.weighting!r}")


@dataclass(frozen=True)
class RoundReport:
    round: int
    per_client_loss: dict
    global_eval_accuracy: float


def client_rng(seed: int, client_id: str) -> np.random.Generator:
    """Client-local stream independent of execution order across clients."""
    digest = hashlib.blake2b(client_id.encode(), digest_size=8).digest()
    return np.random.default_rng((seed, int.from_bytes(digest, "little")))


def weighted_average(params_list: list[ModelParams], weights: list[float]) -> ModelParams:
    """Average of parameter vectors. A single client, or clients whose
    vectors are bit-identical, average to an exact copy so the degenerate
    federations stay bit-exact."""
    if not params_list:
        raise AgriShareError("nothing to average")
    first = params_list[0]
    if any(p.shape != first.shape for p in params_list):
        raise AgriShareError("parameter shape mismatch across clients")
    if len(params_list) == 1 or all(
        np.array_equal(p.weights, first.weights) for p in params_list[1:]
    ):
        return replace(first, weights=first.weights.copy())
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    acc = np.zeros_like(first.weights)
    for wi, p in zip(w, params_list):
        acc += wi * p.weights
    return replace(first, weights=acc)


def fedavg_run(
    init: ModelParams,
    client_data: dict[str, tuple[np.ndarray, np.ndarray]],
    cfg: FedConfig,
    eval_data: tuple[np.ndarray, np.ndarray],
    classes: tuple,
) -> tuple[ModelParams, list[RoundReport]]:
    """Synchronous federated averaging.

    Per round every client trains the broadcast parameters locally for
    cfg.local_epochs; the server replaces the global parameters with the
    weighted average. Client shuffle streams persist across rounds, so a
    one-client federation is bit-identical to plain local training with the
    same total epoch count.
    """
    missing = [c for c in cfg.clients if c not in client_data]
    if missing:
        raise AgriShareError(f"no data for clients {missing}")
    order = sorted(cfg.clients)
    streams = {cid: client_rng(cfg.train_cfg.seed, cid) for cid in order}
    local_cfg = replace(cfg.train_cfg, epochs=cfg.local_epochs)
    global_params = replace(init, weights=init.weights.copy())
    reports = []
    for rnd in range(1, cfg.rounds + 1):
        updated, losses, weights = [], {}, []
        for cid in order:
            X, y = client_data[cid]
            local = mlp_train_local(global_params, X, y, local_cfg, classes,
                                    rng=streams[cid])
            updated.append(local)
            losses[cid] = mlp_loss(local, X, y, classes, local_cfg.l2)
            weights.append(float(len(y)) if cfg.weighting == "by-sample-count" else 1.0)
        global_params = weighted_average(updated, weights)
        reports.append(RoundReport(
            round=rnd,
            per_client_loss=losses,
            global_eval_accuracy=accuracy(global_params, eval_data[0], eval_data[1],
                                          classes=classes),
        ))
    return global_params, reports


def _materialize(entry):
    return entry() if callable(entry) else entry


def personalized_training(
    store: AggregatedStore,
    initiator: str,
    raw_market_data: dict,
    m: int,
    mode: str,
    rounds: int = 20,
    local_epochs: int = 5,
    train_cfg: TrainConfig | None = None,
    hidden: int = MLP_HIDDEN,
    weighting: str = "by-sample-count",
) -> tuple[ModelParams, list[RoundReport], list[str]]:
    """Select m collaborators from the privatized store, then federate over
    their raw local datasets, evaluating on the initiator's own rows (which
    never enter training, so the whole initiator set is held out).

    raw_market_data values may be (X, y) tuples or zero-argument loaders;
    loaders are invoked only after selection, and the selection step runs
    under an audit guard so any raw read during it fails loudly.
    """
    train_cfg = train_cfg or TrainConfig(learning_rate=0.01, epochs=local_epochs,
                                         batch_size=32, seed=0, l2=0.0)
    with audit.guard(audit.RAW_READ):
        collaborators = select_collaborators(store, initiator, m, mode)
    client_data = {cid: _materialize(raw_market_data[cid]) for cid in collaborators}
    eval_X, eval_y = _materialize(raw_market_data[initiator])
    label_sets = [set(np.asarray(y).tolist()) for _, y in client_data.values()]
    label_sets.append(set(np.asarray(eval_y).tolist()))
    classes = tuple(sorted(set().union(*label_sets)))
    width = eval_X.shape[1]
    if any(X.shape[1] != width for X, _ in client_data.values()):
        raise AgriShareError("clients disagree on feature width")
    init = mlp_init((width, hidden, len(classes)), seed=train_cfg.seed)
    cfg = FedConfig(rounds=rounds, local_epochs=local_epochs,
                    clients=tuple(collaborators), train_cfg=train_cfg,
                    weighting=weighting)
    params, reports = fedavg_run(init, client_data, cfg, (eval_X, eval_y), classes)
    return params, reports, collaborators


def accuracy_vs_epsilon_fl(
    pipe,
    epsilons,
    seeds,
    initiator: str,
    m: int,
    mode: str,
    rounds: int = 20,
    local_epochs: int = 5,
    train_cfg: TrainConfig | None = None,
    hidden: int = MLP_HIDDEN,
) -> list[dict]:
    """Personalized-model accuracy across the epsilon grid.

    For each (epsilon, seed) the shares are rebuilt at that epsilon,
    collaborators reselected from the fresh store, the federation retrained
    and the final accuracy on the initiator recorded. Training seeds stay
    fixed across epsilons, so only the noise magnitude driving selection
    varies between grid points.
    """
    if not list(epsilons):
        raise AgriShareError("epsilon grid must be non-empty")
    raw = {pid: pipe.raw_arrays(pid) for pid in pipe.market_ids}
    rows = []
    for eps in epsilons:
        for seed in seeds:
            store = pipe.make_store(eps, seed)
            _, reports, collaborators = personalized_training(
                store, initiator, raw, m, mode,
                rounds=rounds, local_epochs=local_epochs, train_cfg=train_cfg,
                hidden=hidden)
            rows.append({"epsilon": float(eps), "seed": int(seed),
                         "accuracy": reports[-1].global_eval_accuracy,
                         "collaborators": ",".join(collaborators)})
    return rows
