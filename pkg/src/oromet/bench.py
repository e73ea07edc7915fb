"""Classification benchmark: do isolation and prominence help find relevant points?

Features are min-max normalized once on the whole dataset, then a
class-weighted L2 logistic regression is scored by g-mean over repeated
stratified k-fold cross-validation, for every non-empty feature subset.
"""

from __future__ import annotations

import io
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, UndefinedMetricError, ValidationError
from .metric import MetricDataset
from .orometry import OrometricScores

log = logging.getLogger(__name__)

FEATURES = ("iso", "pr", "po")
METRICS = ("acc+", "acc-", "g-mean")
COMBINATIONS = tuple(c for k in (1, 2, 3) for c in itertools.combinations(FEATURES, k))


def minmax(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    lo, hi = x.min(), x.max()
    if hi == lo:
        log.warning("constant feature column; normalized to zeros")
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


@dataclass(frozen=True, eq=False)
class LabeledFeatureTable:
    columns: dict
    labels: np.ndarray

    def __post_init__(self):
        lengths = {len(c) for c in self.columns.values()}
        if lengths != {len(self.labels)}:
            raise ValidationError("feature columns and labels differ in length")
        if not (np.any(self.labels == 1) and np.any(self.labels == 0)):
            raise ValidationError("need at least one positive and one negative label")

    def __len__(self):
        return len(self.labels)

    def matrix(self, features: Sequence[str]) -> np.ndarray:
        unknown = [f for f in features if f not in self.columns]
        if not features or unknown:
            raise ValidationError(f"features must be a non-empty subset of {list(self.columns)}, got {list(features)}")
        return np.column_stack([self.columns[f] for f in features])


def normalize(ds: MetricDataset, scores: OrometricScores) -> LabeledFeatureTable:
    """Min-max scale population, isolation and prominence over the whole dataset."""
    cols = {"iso": minmax(scores.isolation), "pr": minmax(scores.prominence), "po": minmax(ds.heights)}
    return LabeledFeatureTable(cols, ds.labels)


def balanced_weights(y) -> tuple[float, float]:
    """Per-class weights n / (2 n_class), returned as (positive, negative)."""
    y = np.asarray(y)
    n, n_pos = len(y), int(np.sum(y == 1))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("balanced weights need both classes")
    return n / (2 * n_pos), n / (2 * n_neg)


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def logistic_objective(params, X, y, sample_weight, C):
    """Weighted logistic loss plus ``|w|^2 / 2C`` and its gradient.

    ``params`` is the weight vector followed by the (unpenalized) bias;
    ``y`` holds 0/1 labels.
    """
    w, b = params[:-1], params[-1]
    sign = np.where(y == 1, 1.0, -1.0)
    z = sign * (X @ w + b)
    loss = float(np.sum(sample_weight * np.logaddexp(0.0, -z)) + w @ w / (2 * C))
    coef = -sample_weight * sign * _sigmoid(-z)
    grad = np.empty_like(params)
    grad[:-1] = X.T @ coef + w / C
    grad[-1] = coef.sum()
    return loss, grad


def _hessian(params, X, sample_weight, C):
    s = _sigmoid(X @ params[:-1] + params[-1])
    r = sample_weight * s * (1 - s)
    Xb = np.column_stack([X, np.ones(len(X))])
    H = Xb.T @ (Xb * r[:, None])
    H[np.arange(X.shape[1]), np.arange(X.shape[1])] += 1.0 / C
    return H


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    C: float
    class_weights: tuple[float, float]
    iterations: int = 0

    def decision_function(self, X):
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def predict_proba(self, X):
        return _sigmoid(self.decision_function(X))

    def predict(self, X):
        return (self.predict_proba(X) > 0.5).astype(int)


def train_logistic(X, y, *, C=1.0, class_weighting="balanced", tol=1e-8, max_iter=10_000) -> LogisticModel:
    """Fit by damped Newton iterations until the gradient norm drops below ``tol``.

    Stops early, as converged, once the Newton step is too small to change
    the parameters in floating point.
    """
    if C <= 0:
        raise ValidationError(f"C must be positive, got {C}")
    if class_weighting != "balanced":
        raise ValidationError(f"unsupported class weighting {class_weighting!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim == 1:
        X = X[:, None]
    w_pos, w_neg = balanced_weights(y)
    sw = np.where(y == 1, w_pos, w_neg)
    params = np.zeros(X.shape[1] + 1)
    loss, grad = logistic_objective(params, X, y, sw, C)
    for it in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            return LogisticModel(params[:-1].copy(), float(params[-1]), C, (w_pos, w_neg), it)
        try:
            step = np.linalg.solve(_hessian(params, X, sw, C), grad)
        except np.linalg.LinAlgError:
            step = grad
        # Newton step below float resolution: the gradient is at its rounding floor
        if np.max(np.abs(step)) <= 1e-12 * (1 + np.max(np.abs(params))):
            return LogisticModel(params[:-1].copy(), float(params[-1]), C, (w_pos, w_neg), it)
        t = 1.0
        while True:
            cand = params - t * step
            new_loss, new_grad = logistic_objective(cand, X, y, sw, C)
            # slack of a few ulps: near the optimum the loss only changes by rounding
            if new_loss <= loss - 1e-4 * t * (grad @ step) + 8 * np.finfo(float).eps * abs(loss) or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10 and np.linalg.norm(new_grad) >= gnorm:
            raise ConvergenceError("line search failed", gnorm)
        params, loss, grad = cand, new_loss, new_grad
    raise ConvergenceError(f"no convergence in {max_iter} iterations", float(np.linalg.norm(grad)))


def gmean(tp: int, fp: int, tn: int, fn: int) -> tuple[float, float, float]:
    """Sensitivity, specificity and their geometric mean."""
    if tp + fn < 1 or tn + fp < 1:
        raise UndefinedMetricError(f"class accuracy undefined for TP={tp}, FP={fp}, TN={tn}, FN={fn}")
    acc_pos = tp / (tp + fn)
    acc_neg = tn / (tn + fp)
    return acc_pos, acc_neg, math.sqrt(acc_pos * acc_neg)


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    return tp, fp, tn, fn


def stratified_folds(y, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle each class and deal it into ``folds`` nearly equal parts."""
    y = np.asarray(y)
    parts = [[] for _ in range(folds)]
    offset = 0
    for cls in (1, 0):
        idx = rng.permutation(np.flatnonzero(y == cls))
        chunks = np.array_split(idx, folds)
        # rotate so the larger chunks of both classes do not pile into the same folds
        for k in range(folds):
            parts[(k + offset) % folds].append(chunks[k])
        offset += len(idx) % folds
    return [np.sort(np.concatenate(p)) for p in parts]


def _repeat_rng(seed: int, repeat: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, repeat]))


@dataclass
class CVResult:
    """Per-fold (acc+, acc-, g-mean) rows of one feature subset.

    ``mean`` averages all fold rows. ``std`` is the population standard
    deviation of the per-repeat averages, i.e. the spread between repeated
    cross-validations; ``fold_std`` is the spread of individual folds.
    """

    features: tuple
    scores: np.ndarray  # (n_folds_evaluated, 3)
    repeat_ids: np.ndarray
    skipped: int = 0

    def mean(self):
        return self.scores.mean(axis=0)

    def repeat_means(self):
        ids = np.unique(self.repeat_ids)
        return np.array([self.scores[self.repeat_ids == r].mean(axis=0) for r in ids]).reshape(-1, 3)

    def std(self):
        return self.repeat_means().std(axis=0)

    def fold_std(self):
        return self.scores.std(axis=0)


def _one_repeat(table, features, folds, seed, repeat, C):
    X, y = table.matrix(features), table.labels
    rng = _repeat_rng(seed, repeat)
    rows, skipped = [], 0
    for test in stratified_folds(y, folds, rng):
        train = np.ones(len(y), dtype=bool)
        train[test] = False
        y_train, y_test = y[train], y[test]
        if len(np.unique(y_train)) < 2 or len(np.unique(y_test)) < 2:
            log.warning("repeat %d: skipping a fold with a missing class", repeat)
            skipped += 1
            continue
        model = train_logistic(X[train], y_train, C=C)
        rows.append(gmean(*confusion(y_test, model.predict(X[test]))))
    return rows, skipped


def repeated_cv(table: LabeledFeatureTable, features, repeats=100, folds=5, seed=0, *, C=1.0, threads=1) -> CVResult:
    """Score one feature subset over ``repeats`` independently seeded k-fold splits.

    Repeat ``r`` draws its split from ``SeedSequence([seed, r])``, so results do
    not depend on ``threads`` and every feature subset sees the same splits.
    """
    if repeats < 1 or folds < 2:
        raise ValidationError(f"need repeats >= 1 and folds >= 2, got {repeats}, {folds}")
    features = tuple(features)
    table.matrix(features)
    job = lambda r: _one_repeat(table, features, folds, seed, r, C)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(job, range(repeats)))
    else:
        results = [job(r) for r in range(repeats)]
    rows = [row for rs, _ in results for row in rs]
    ids = [r for r, (rs, _) in enumerate(results) for _ in rs]
    skipped = sum(s for _, s in results)
    return CVResult(features, np.array(rows, dtype=float).reshape(-1, 3), np.array(ids, dtype=int), skipped)


@dataclass
class EvaluationReport:
    results: list
    seed: int
    repeats: int
    folds: int
    C: float = 1.0
    meta: dict = field(default_factory=dict)

    def row(self, features) -> CVResult:
        key = tuple(features.split("+")) if isinstance(features, str) else tuple(features)
        for r in self.results:
            if r.features == key:
                return r
        raise KeyError(features)

    def gmean_of(self, features) -> float:
        return float(self.row(features).mean()[2])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("features,metric,mean,std\n")
        for r in self.results:
            for name, mu, sd in zip(METRICS, r.mean(), r.std()):
                buf.write(f"{'+'.join(r.features)},{name},{float(mu)!r},{float(sd)!r}\n")
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [
            f"logistic regression (C={self.C}), {self.repeats} x {self.folds}-fold CV, seed {self.seed}",
            f"{'features':<10} {'score':<7} {'mean':>8} {'std':>8}",
        ]
        for r in self.results:
            lines.append("-" * 36)
            for k, (name, mu, sd) in enumerate(zip(METRICS, r.mean(), r.std())):
                label = "+".join(r.features) if k == 0 else ""
                lines.append(f"{label:<10} {name:<7} {mu:8.4f} {sd:8.4f}")
        skipped = sum(r.skipped for r in self.results)
        if skipped:
            lines.append(f"skipped folds: {skipped}")
        return "\n".join(lines) + "\n"


def run_experiment(table: LabeledFeatureTable, *, repeats=100, folds=5, seed=0, C=1.0, threads=1, combinations=COMBINATIONS) -> EvaluationReport:
    results = [repeated_cv(table, c, repeats, folds, seed, C=C, threads=threads) for c in combinations]
    return EvaluationReport(results, seed, repeats, folds, C)
