"""One-vs-rest linear SVM trained by dual coordinate descent.

Each binary problem is the L2-regularized hinge-loss SVM

    min_w  1/2 |w|^2 + C * sum_i max(0, 1 - y_i w.x_i)

with the bias folded in as a constant feature of value 1. The solver
works on the dual, ``max_a sum(a) - 1/2 |sum_i a_i y_i x_i|^2`` subject to
``0 <= a_i <= C``, updating one coordinate at a time to its exact clipped
optimum (Hsieh et al., 2008). Shrinking is not used.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .container import read_container, write_container
from .errors import CorruptFileError, DegenerateInputError, ShapeMismatchError, UnknownLabelError

SVM_MAGIC = b"FSV1"
C_GRID = (0.01, 0.1, 1.0, 10.0)


@dataclass
class BinaryFit:
    w: np.ndarray
    bias: float
    alpha: np.ndarray
    objective: list  # dual objective after each full sweep
    max_violation: float
    sweeps: int


def _dual_objective(alpha, w_aug):
    return float(alpha.sum() - 0.5 * w_aug @ w_aug)


@njit(cache=True)
def _sweep(Xa, y, qdiag, alpha, w, order, C):
    """One pass of coordinate updates in ``order``; returns the largest |projected gradient|."""
    violation = 0.0
    d = Xa.shape[1]
    for i in order:
        g = 0.0
        for j in range(d):
            g += w[j] * Xa[i, j]
        g = y[i] * g - 1.0
        a = alpha[i]
        if a <= 0.0:
            pg = min(g, 0.0)
        elif a >= C:
            pg = max(g, 0.0)
        else:
            pg = g
        violation = max(violation, abs(pg))
        if pg != 0.0:
            new = min(max(a - g / qdiag[i], 0.0), C)
            if new != a:
                step = (new - a) * y[i]
                for j in range(d):
                    w[j] += step * Xa[i, j]
                alpha[i] = new
    return violation


def fit_binary(X, y, C=1.0, tol=1e-3, max_iter=1000, rng=None):
    """Dual coordinate descent on one +1/-1 problem.

    Coordinates are visited in a fresh random order each sweep. Stops once
    the largest projected-gradient magnitude seen in a sweep drops below
    ``tol`` or after ``max_iter`` sweeps.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    Xa = np.ascontiguousarray(np.hstack([X, np.ones((n, 1))]))
    qdiag = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    rng = rng or np.random.default_rng(0)
    history = []
    violation = np.inf
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        violation = _sweep(Xa, y, qdiag, alpha, w, rng.permutation(n), float(C))
        history.append(_dual_objective(alpha, w))
        if violation < tol:
            break
    return BinaryFit(w[:-1].copy(), float(w[-1]), alpha, history, violation, sweeps)


@dataclass
class SvmModel:
    weights: np.ndarray  # (n_classes, dim)
    biases: np.ndarray
    labels: list
    C: float = 1.0
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64).reshape(-1)
        if len(self.labels) < 2:
            raise DegenerateInputError("an SVM model needs at least two classes")
        if self.weights.shape[0] != len(self.labels) or self.biases.shape[0] != len(self.labels):
            raise ShapeMismatchError("weights, biases and labels disagree on class count")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weight rows must be finite")

    @property
    def dim(self):
        return int(self.weights.shape[1])

    def label_index(self, labels):
        lookup = {lab: i for i, lab in enumerate(self.labels)}
        try:
            return np.array([lookup[lab] for lab in labels], dtype=np.intp)
        except KeyError as exc:
            raise UnknownLabelError(f"label {exc.args[0]!r} is not known to the model") from None


def _as_features(features):
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatchError(f"features must be a 2-D matrix, got shape {X.shape}")
    return X


def train(features, labels, C=1.0, tol=1e-3, max_iter=1000, seed=0):
    """Fit one binary classifier per class (that class vs the rest)."""
    X = _as_features(features)
    labels = list(labels)
    n, d = X.shape
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    if len(labels) != n:
        raise ShapeMismatchError(f"{len(labels)} labels for {n} samples")
    if n < 2 or d == 0:
        raise DegenerateInputError(f"need at least 2 samples and 1 feature, got {X.shape}")
    classes = sorted(set(labels), key=lambda v: (str(type(v)), v))
    if len(classes) < 2:
        raise DegenerateInputError("need at least two distinct labels")
    idx = {c: i for i, c in enumerate(classes)}
    y = np.array([idx[v] for v in labels])
    W = np.zeros((len(classes), d))
    b = np.zeros(len(classes))
    history = []
    for k in range(len(classes)):
        fit = fit_binary(X, np.where(y == k, 1.0, -1.0), C, tol, max_iter,
                         np.random.default_rng([seed, k]))
        W[k], b[k] = fit.w, fit.bias
        history.append(fit)
    return SvmModel(W, b, [_plain(c) for c in classes], float(C), history)


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def decision_scores(model, features):
    X = _as_features(features)
    if X.shape[1] != model.dim:
        raise ShapeMismatchError(f"model expects {model.dim} features, got {X.shape[1]}")
    return X @ model.weights.T + model.biases


def predict(model, features):
    scores = decision_scores(model, features)
    return [model.labels[i] for i in np.argmax(scores, axis=1)]


def confusion_report(true_idx, pred_idx, n_classes):
    """Accuracy figures from integer class indices.

    ``accuracy`` is the mean of per-class recalls over the classes that
    occur in ``true_idx``; ``sample_accuracy`` is the plain hit rate.
    Both are percentages.
    """
    true_idx = np.asarray(true_idx, dtype=np.intp)
    pred_idx = np.asarray(pred_idx, dtype=np.intp)
    if true_idx.size == 0:
        raise ValueError("cannot evaluate an empty label set")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (true_idx, pred_idx), 1)
    support = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, np.diag(confusion) / support, np.nan) * 100.0
    return {"accuracy": float(np.nanmean(per_class)),
            "sample_accuracy": float(100.0 * np.mean(true_idx == pred_idx)),
            "per_class_accuracy": per_class,
            "confusion": confusion}


def evaluate(model, features, labels):
    labels = list(labels)
    if not labels:
        raise ValueError("cannot evaluate an empty label set")
    true_idx = model.label_index(labels)
    pred_idx = np.argmax(decision_scores(model, features), axis=1)
    report = confusion_report(true_idx, pred_idx, len(model.labels))
    report["labels"] = list(model.labels)
    return report


def grid_search(features, labels, Cs=C_GRID, folds=3, seed=0, tol=1e-3, max_iter=1000):
    """Pick C by k-fold mean per-class accuracy; returns ``(best_C, {C: score})``."""
    X = _as_features(features)
    labels = np.asarray(labels, dtype=object)
    order = np.random.default_rng(seed).permutation(len(labels))
    chunks = np.array_split(order, folds)
    scores = {}
    for C in Cs:
        accs = []
        for f in range(folds):
            test = chunks[f]
            train_idx = np.concatenate([chunks[j] for j in range(folds) if j != f])
            if len(set(labels[train_idx])) < 2:
                continue
            model = train(X[train_idx], labels[train_idx], C, tol, max_iter, seed)
            known = [i for i in test if labels[i] in model.labels]
            if known:
                accs.append(evaluate(model, X[known], labels[known])["accuracy"])
        scores[C] = float(np.mean(accs)) if accs else float("nan")
    best = max(Cs, key=lambda c: (np.nan_to_num(scores[c], nan=-1.0), -c))
    return best, scores


def save_svm(path, model):
    header = {"labels": list(model.labels), "C": model.C}
    write_container(path, SVM_MAGIC, len(model.labels), header,
                    {"weights": model.weights, "biases": model.biases})


def load_svm(path):
    count, header, arrays = read_container(path, SVM_MAGIC)
    try:
        model = SvmModel(arrays["weights"], arrays["biases"], list(header["labels"]),
                         float(header["C"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"{path}: malformed classifier ({exc})") from exc
    if count != len(model.labels):
        raise CorruptFileError(f"{path}: class count disagrees with header")
    return model
