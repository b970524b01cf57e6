"""Classifiers on frozen representations: 1NN, logistic regression, RBF SVM."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

log = logging.getLogger(__name__)

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class StandardizerStats:
    mean: np.ndarray
    std: np.ndarray


def standardize_fit(reps) -> StandardizerStats:
    reps = np.atleast_2d(np.asarray(reps, dtype=np.float64))
    if reps.shape[0] < 1:
        raise ValueError("standardization needs at least one representation")
    return StandardizerStats(reps.mean(axis=0), np.maximum(reps.std(axis=0), STD_FLOOR))


def standardize_apply(stats: StandardizerStats, reps) -> np.ndarray:
    return (np.asarray(reps, dtype=np.float64) - stats.mean) / stats.std


def _check_labels(labels) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError(f"need at least 2 classes to fit a classifier, got {classes.tolist()}")
    return labels, classes


# --------------------------------------------------------------------------
# nearest neighbour

@dataclass
class KnnModel:
    reps: np.ndarray
    labels: np.ndarray

    def predict(self, queries) -> np.ndarray:
        return knn1(self.reps, self.labels, queries)


def knn1(train_reps, train_labels, queries) -> np.ndarray:
    """Label of the closest train point in squared Euclidean distance.

    Ties go to the lowest train index. ``queries`` may be one vector or a
    ``[n, d]`` array; the result always has one label per query row.
    """
    train = np.atleast_2d(np.asarray(train_reps, dtype=np.float64))
    labels = np.asarray(train_labels)
    if train.shape[0] == 0:
        raise ValueError("1NN needs a non-empty training set")
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    # exact differences rather than the expanded-norm trick, so that ties stay ties
    d2 = ((q[:, None, :] - train[None, :, :]) ** 2).sum(axis=-1)
    return labels[np.argmin(d2, axis=1)]


# --------------------------------------------------------------------------
# logistic regression

@dataclass
class BinaryLogReg:
    w: np.ndarray
    b: float
    grad_norm: float
    iterations: int

    def decision(self, x) -> np.ndarray:
        return np.asarray(x) @ self.w + self.b


def logreg_objective(w, b, x, y, C) -> float:
    z = y * (x @ w + b)
    return 0.5 * float(w @ w) + C * float(np.logaddexp(0.0, -z).sum())


def _fit_binary_logreg(x: np.ndarray, y: np.ndarray, C: float, tol: float,
                       max_iter: int) -> BinaryLogReg:
    # Damped Newton on theta = [w, b]; the intercept is not penalized.
    n, d = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    theta = np.zeros(d + 1)
    reg = np.ones(d + 1)
    reg[-1] = 0.0

    def objective(th):
        return logreg_objective(th[:-1], th[-1], x, y, C)

    def gradient(th):
        z = y * (xa @ th)
        s = 0.5 * (1.0 - np.tanh(0.5 * z))  # sigmoid(-z), overflow safe
        return reg * th - C * xa.T @ (y * s), s

    g, s = gradient(theta)
    f = objective(theta)
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) < tol:
            break
        h = xa.T @ (xa * (C * s * (1.0 - s))[:, None])
        h[np.diag_indices_from(h)] += reg + 1e-12
        step = np.linalg.solve(h, g)
        t = 1.0
        while True:
            cand = theta - t * step
            fc = objective(cand)
            if fc <= f - 1e-4 * t * float(g @ step) or t < 1e-10:
                break
            t *= 0.5
        theta, f = cand, fc
        g, s = gradient(theta)
    gn = float(np.linalg.norm(g))
    if gn >= tol:
        log.warning("logistic regression stopped at gradient norm %.3g", gn)
    return BinaryLogReg(theta[:-1].copy(), float(theta[-1]), gn, it)


@dataclass
class LogRegModel:
    classes: np.ndarray
    models: list[BinaryLogReg]
    C: float

    def scores(self, x) -> np.ndarray:
        return np.column_stack([m.decision(x) for m in self.models])

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if len(self.classes) == 2:
            return self.classes[(self.models[0].decision(x) > 0).astype(int)]
        return self.classes[np.argmax(self.scores(x), axis=1)]

    @property
    def grad_norm(self) -> float:
        return max(m.grad_norm for m in self.models)


def logreg_fit(reps, labels, C: float = 0.1, tol: float = 1e-6, max_iter: int = 200) -> LogRegModel:
    """One-vs-rest L2 logistic regression.

    Each binary model minimizes ``0.5*|w|^2 + C * sum log(1 + exp(-y (w.x + b)))``.
    Two-class problems use a single model for the larger class id.
    """
    x = np.atleast_2d(np.asarray(reps, dtype=np.float64))
    labels, classes = _check_labels(labels)
    targets = classes[1:] if classes.size == 2 else classes
    models = [_fit_binary_logreg(x, np.where(labels == c, 1.0, -1.0), C, tol, max_iter)
              for c in targets]
    return LogRegModel(classes, models, C)


def logreg_predict(model: LogRegModel, reps) -> np.ndarray:
    return model.predict(reps)


# --------------------------------------------------------------------------
# support vector machine

def rbf_kernel(a, b, gamma: float) -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


@dataclass
class BinarySvm:
    alpha: np.ndarray  # full dual vector over the training points of this pair
    y: np.ndarray
    rho: float
    iterations: int
    support: np.ndarray = field(default=None)

    def dual_objective(self, kernel: np.ndarray) -> float:
        """``sum(alpha) - 0.5 * alpha' Q alpha`` with ``Q = y y' * K``."""
        ay = self.alpha * self.y
        return float(self.alpha.sum() - 0.5 * ay @ kernel @ ay)


def smo(kernel: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3,
        max_iter: int = 1_000_000) -> BinarySvm:
    """Solve the binary soft-margin dual with maximal-violating-pair SMO.

    Minimizes ``0.5 a'Qa - sum(a)`` subject to ``0 <= a <= C`` and ``y'a = 0``,
    stopping once the KKT gap ``m(a) - M(a)`` falls below ``tol``.
    """
    n = y.size
    q = (y[:, None] * y[None, :]) * kernel
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    for it in range(max_iter):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * grad
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if score[i] - score[j] < tol:
            break
        # two-variable subproblem along y_i a_i + y_j a_j = const
        quad = q[i, i] + q[j, j] - 2.0 * y[i] * y[j] * q[i, j]
        quad = max(quad, 1e-12)
        delta = (score[i] - score[j]) / quad
        # a_i moves by y_i*delta, a_j by -y_j*delta; clip so both stay in the box
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        delta = min(delta, lim_i, lim_j)
        di, dj = y[i] * delta, -y[j] * delta
        alpha[i] += di
        alpha[j] += dj
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        grad += q[:, i] * di + q[:, j] * dj
    else:
        log.warning("SMO hit max_iter=%d before reaching tolerance", max_iter)
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = (-yg)[up].max() if up.any() else 0.0
        lo = (-yg)[low].min() if low.any() else 0.0
        rho = float(-(hi + lo) / 2.0)
    return BinarySvm(alpha, y.astype(np.float64), rho, it, np.flatnonzero(alpha > 0))


@dataclass
class SvmModel:
    classes: np.ndarray
    reps: np.ndarray
    gamma: float
    C: float
    pairs: list[tuple[int, int, np.ndarray, BinarySvm]]

    def decision_pairs(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = []
        for _, _, idx, m in self.pairs:
            k = rbf_kernel(x, self.reps[idx], self.gamma)
            out.append(k @ (m.alpha * m.y) - m.rho)
        return np.column_stack(out)

    def predict(self, x) -> np.ndarray:
        dec = self.decision_pairs(x)
        votes = np.zeros((dec.shape[0], len(self.classes)), dtype=int)
        for col, (a, b, _, _) in enumerate(self.pairs):
            winner = np.where(dec[:, col] > 0, a, b)
            np.add.at(votes, (np.arange(dec.shape[0]), winner), 1)
        return self.classes[np.argmax(votes, axis=1)]


def svm_fit(reps, labels, C: float = 100.0, gamma: float | None = None,
            tol: float = 1e-3) -> SvmModel:
    """One-vs-one RBF SVMs; ``gamma`` defaults to 1 / n_features."""
    x = np.atleast_2d(np.asarray(reps, dtype=np.float64))
    labels, classes = _check_labels(labels)
    gamma = 1.0 / x.shape[1] if gamma is None else gamma
    kernel = rbf_kernel(x, x, gamma)
    pairs = []
    for a, b in combinations(range(classes.size), 2):
        idx = np.flatnonzero((labels == classes[a]) | (labels == classes[b]))
        y = np.where(labels[idx] == classes[a], 1.0, -1.0)
        pairs.append((a, b, idx, smo(kernel[np.ix_(idx, idx)], y, C, tol)))
    return SvmModel(classes, x, gamma, C, pairs)


def svm_predict(model: SvmModel, reps) -> np.ndarray:
    return model.predict(reps)
