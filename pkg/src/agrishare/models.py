"""From-scratch classifiers and a small feed-forward network.

Everything trains deterministically from a seed and uses plain numpy.
Feature matrices are expected to be standardized by the caller; labels may
be any hashable values (crop names, cluster indices).
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import AgriShareError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    batch_size: int = 32
    seed: int = 0
    l2: float = 1e-4

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 0 or self.batch_size < 0 or self.l2 < 0:
            raise AgriShareError("invalid training configuration")


LOGREG_DEFAULTS = TrainConfig(learning_rate=0.1, epochs=500, batch_size=0, seed=0, l2=1e-4)
SVM_DEFAULTS = TrainConfig(learning_rate=0.2, epochs=500, batch_size=32, seed=0, l2=1e-3)
MLP_DEFAULTS = TrainConfig(learning_rate=0.01, epochs=20, batch_size=32, seed=0, l2=0.0)
GNB_SMOOTHING = 1e-9
MLP_HIDDEN = 32


@dataclass(frozen=True)
class ClassifierModel:
    kind: str                    # logreg | gnb | svm
    classes: tuple
    params: dict


def _encode_labels(y) -> tuple[tuple, np.ndarray]:
    classes = tuple(sorted(set(np.asarray(y).tolist())))
    index = {c: i for i, c in enumerate(classes)}
    return classes, np.array([index[v] for v in np.asarray(y).tolist()], dtype=np.int64)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# multinomial logistic regression
# ---------------------------------------------------------------------------

def logreg_loss_and_grad(w_flat: np.ndarray, X1: np.ndarray, y_onehot: np.ndarray, l2: float):
    """Mean cross-entropy + L2 on non-bias weights; X1 carries a bias column."""
    n, d1 = X1.shape
    n_classes = y_onehot.shape[1]
    W = w_flat.reshape(d1, n_classes)
    probs = _softmax(X1 @ W)
    ce = -np.log(np.maximum(probs[y_onehot.astype(bool)], 1e-300)).mean()
    loss = ce + 0.5 * l2 * float((W[:-1] ** 2).sum())
    grad = X1.T @ (probs - y_onehot) / n
    grad[:-1] += l2 * W[:-1]
    return loss, grad.ravel()


def train_logreg(X: np.ndarray, y, cfg: TrainConfig | None = None) -> ClassifierModel:
    """Full-batch gradient descent from zero initialization (convex, so the
    seed only matters to callers that also split data)."""
    cfg = cfg or LOGREG_DEFAULTS
    classes, yi = _encode_labels(y)
    if len(classes) < 2:
        raise AgriShareError("logistic regression needs at least 2 classes")
    if len(yi) < len(classes):
        raise AgriShareError("need at least as many rows as classes")
    X = np.asarray(X, dtype=np.float64)
    X1 = np.hstack([X, np.ones((X.shape[0], 1))])
    y_onehot = np.eye(len(classes))[yi]
    w = np.zeros(X1.shape[1] * len(classes))
    for _ in range(cfg.epochs):
        _, grad = logreg_loss_and_grad(w, X1, y_onehot, cfg.l2)
        w = w - cfg.learning_rate * grad
    W = w.reshape(X1.shape[1], len(classes))
    return ClassifierModel(kind="logreg", classes=classes,
                           params={"weights": W[:-1], "bias": W[-1]})


# ---------------------------------------------------------------------------
# Gaussian naive Bayes
# ---------------------------------------------------------------------------

def train_gnb(X: np.ndarray, y, smoothing: float = GNB_SMOOTHING) -> ClassifierModel:
    if smoothing <= 0:
        raise AgriShareError("smoothing must be positive")
    classes, yi = _encode_labels(y)
    if len(classes) < 2:
        raise AgriShareError("naive Bayes needs at least 2 classes")
    X = np.asarray(X, dtype=np.float64)
    counts = np.bincount(yi, minlength=len(classes))
    if counts.min() < 2:
        short = classes[int(counts.argmin())]
        raise AgriShareError(f"class {short!r} has fewer than 2 samples")
    var_floor = smoothing * float(X.var(axis=0).max())
    means = np.stack([X[yi == c].mean(axis=0) for c in range(len(classes))])
    variances = np.maximum(
        np.stack([X[yi == c].var(axis=0) for c in range(len(classes))]), var_floor
    )
    priors = counts / counts.sum()
    return ClassifierModel(kind="gnb", classes=classes,
                           params={"means": means, "variances": variances, "priors": priors})


# ---------------------------------------------------------------------------
# linear SVM, one-vs-rest
# ---------------------------------------------------------------------------

def svm_objective(w: np.ndarray, b: float, X: np.ndarray, t: np.ndarray, l2: float) -> float:
    margins = t * (X @ w + b)
    return 0.5 * l2 * float(w @ w) + float(np.maximum(0.0, 1.0 - margins).mean())


def _train_svm_binary(X, t, cfg: TrainConfig, rng: np.random.Generator):
    """Mini-batch subgradient descent on hinge + L2, 1/t-style step decay.

    The objective is evaluated after every epoch and the best iterate is
    returned, which keeps the monitored objective trace non-increasing.
    """
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    batch = cfg.batch_size if cfg.batch_size > 0 else n
    best_obj = svm_objective(w, b, X, t, cfg.l2)
    best = (best_obj, w.copy(), b)
    trace = [best_obj]
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate / (1.0 + 4.0 * epoch / max(cfg.epochs, 1))
        order = rng.permutation(n)
        for start in range(0, n, batch):
            sel = order[start:start + batch]
            Xb, tb = X[sel], t[sel]
            viol = tb * (Xb @ w + b) < 1.0
            gw = cfg.l2 * w - (tb[viol, None] * Xb[viol]).sum(axis=0) / len(sel)
            gb = -tb[viol].sum() / len(sel)
            w -= lr * gw
            b -= lr * gb
        obj = svm_objective(w, b, X, t, cfg.l2)
        if obj < best[0]:
            best = (obj, w.copy(), b)
        trace.append(best[0])
    return best[1], best[2], trace


def train_svm(X: np.ndarray, y, cfg: TrainConfig | None = None) -> ClassifierModel:
    cfg = cfg or SVM_DEFAULTS
    classes, yi = _encode_labels(y)
    if len(classes) < 2:
        raise AgriShareError("SVM needs at least 2 classes")
    X = np.asarray(X, dtype=np.float64)
    weights = np.zeros((len(classes), X.shape[1]))
    biases = np.zeros(len(classes))
    traces = []
    for c in range(len(classes)):
        t = np.where(yi == c, 1.0, -1.0)
        rng = np.random.default_rng((cfg.seed, c))
        weights[c], biases[c], trace = _train_svm_binary(X, t, cfg, rng)
        traces.append(trace)
    return ClassifierModel(kind="svm", classes=classes,
                           params={"weights": weights, "biases": biases,
                                   "objective_traces": traces})


# ---------------------------------------------------------------------------
# feed-forward network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector for a dense relu network with bias terms."""

    shape: tuple[int, ...]
    weights: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        expected = sum((i + 1) * o for i, o in zip(self.shape[:-1], self.shape[1:]))
        if self.weights.shape != (expected,):
            raise AgriShareError(f"weight vector must have length {expected}")
        if not np.all(np.isfinite(self.weights)):
            raise AgriShareError("non-finite network weights")


def _unpack(params: ModelParams):
    layers = []
    pos = 0
    for fan_in, fan_out in zip(params.shape[:-1], params.shape[1:]):
        W = params.weights[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = params.weights[pos:pos + fan_out]
        pos += fan_out
        layers.append((W, b))
    return layers


def mlp_init(shape, seed: int) -> ModelParams:
    rng = np.random.default_rng(seed)
    parts = []
    for fan_in, fan_out in zip(shape[:-1], shape[1:]):
        scale = np.sqrt(2.0 / fan_in)
        parts.append((rng.standard_normal((fan_in, fan_out)) * scale).ravel())
        parts.append(np.zeros(fan_out))
    return ModelParams(shape=tuple(shape), weights=np.concatenate(parts))


def _mlp_forward(params: ModelParams, X: np.ndarray):
    layers = _unpack(params)
    activations = [X]
    h = X
    for W, b in layers[:-1]:
        h = np.maximum(h @ W + b, 0.0)
        activations.append(h)
    W, b = layers[-1]
    return h @ W + b, activations


def mlp_loss_and_grad(weights: np.ndarray, shape, X: np.ndarray, y_onehot: np.ndarray,
                      l2: float = 0.0):
    """Softmax cross-entropy loss and flat gradient via backprop."""
    params = ModelParams(shape=tuple(shape), weights=weights)
    layers = _unpack(params)
    logits, activations = _mlp_forward(params, X)
    probs = _softmax(logits)
    n = X.shape[0]
    loss = -np.log(np.maximum(probs[y_onehot.astype(bool)], 1e-300)).mean()
    if l2:
        loss += 0.5 * l2 * sum(float((W ** 2).sum()) for W, _ in layers)
    delta = (probs - y_onehot) / n
    grads = []
    for idx in range(len(layers) - 1, -1, -1):
        W, _ = layers[idx]
        gW = activations[idx].T @ delta
        if l2:
            gW = gW + l2 * W
        gb = delta.sum(axis=0)
        grads.append((gW, gb))
        if idx > 0:
            delta = (delta @ W.T) * (activations[idx] > 0)
    flat = []
    for gW, gb in reversed(grads):
        flat.append(gW.ravel())
        flat.append(gb)
    return loss, np.concatenate(flat)


def mlp_train_local(params: ModelParams, X: np.ndarray, y, cfg: TrainConfig,
                    classes: tuple, rng: np.random.Generator | None = None) -> ModelParams:
    """Mini-batch SGD for cfg.epochs. Passing `rng` keeps a caller-owned
    shuffle stream (used by federated rounds); otherwise one is derived from
    cfg.seed."""
    if params.shape[0] != X.shape[1]:
        raise AgriShareError("input width does not match network shape")
    index = {c: i for i, c in enumerate(classes)}
    yi = np.array([index[v] for v in np.asarray(y).tolist()], dtype=np.int64)
    if params.shape[-1] != len(classes):
        raise AgriShareError("output width does not match class count")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    weights = params.weights.copy()
    n = X.shape[0]
    batch = cfg.batch_size if cfg.batch_size > 0 else n
    y_onehot = np.eye(len(classes))[yi]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            sel = order[start:start + batch]
            _, grad = mlp_loss_and_grad(weights, params.shape, X[sel], y_onehot[sel], cfg.l2)
            weights = weights - cfg.learning_rate * grad
    return replace(params, weights=weights)


def mlp_loss(params: ModelParams, X: np.ndarray, y, classes: tuple, l2: float = 0.0) -> float:
    index = {c: i for i, c in enumerate(classes)}
    yi = np.array([index[v] for v in np.asarray(y).tolist()], dtype=np.int64)
    y_onehot = np.eye(len(classes))[yi]
    loss, _ = mlp_loss_and_grad(params.weights, params.shape, X, y_onehot, l2)
    return float(loss)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def predict_scores(model, X: np.ndarray, classes: tuple | None = None) -> np.ndarray:
    """Per-row class scores. Probabilistic models return rows summing to 1;
    the SVM returns raw decision values."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if isinstance(model, ModelParams):
        logits, _ = _mlp_forward(model, X)
        return _softmax(logits)
    if model.kind == "logreg":
        return _softmax(X @ model.params["weights"] + model.params["bias"])
    if model.kind == "gnb":
        means, variances = model.params["means"], model.params["variances"]
        log_lik = -0.5 * (((X[:, None, :] - means[None]) ** 2) / variances[None]).sum(axis=2)
        log_lik -= 0.5 * np.log(2.0 * np.pi * variances).sum(axis=1)[None, :]
        log_post = log_lik + np.log(model.params["priors"])[None, :]
        return _softmax(log_post)
    if model.kind == "svm":
        return X @ model.params["weights"].T + model.params["biases"]
    raise AgriShareError(f"unknown model kind {model!r}")


def predict(model, X: np.ndarray, classes: tuple | None = None) -> np.ndarray:
    if isinstance(model, ModelParams):
        if classes is None:
            raise AgriShareError("predicting with raw network params needs `classes`")
        cls = classes
    else:
        cls = model.classes
    scores = predict_scores(model, X)
    idx = scores.argmax(axis=1)
    return np.array([cls[i] for i in idx])


def accuracy(model, X: np.ndarray, y, classes: tuple | None = None) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        raise AgriShareError("cannot score an empty dataset")
    pred = predict(model, X, classes=classes)
    return float((pred == y).mean())
