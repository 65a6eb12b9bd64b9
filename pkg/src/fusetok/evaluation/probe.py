"""Linear probing of frozen features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.preprocessing import StandardScaler

from .distances import MetricError


@dataclass(frozen=True)
class ProbeResult:
    task: str
    metric: str
    score: float  # percent
    role: str


def pool(features) -> np.ndarray:
    """Mean over time: (n, t, d) -> (n, d); 2-D input passes through."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 3:
        return x.mean(axis=1)
    if x.ndim != 2:
        raise MetricError(f"features must be (n, d) or (n, t, d), got shape {x.shape}")
    return x


def fit_probe(features, labels, l2: float = 1e-4, seed: int = 0):
    """Standardize then fit a multinomial logistic regression; returns (scaler, clf)."""
    x = pool(features)
    y = np.asarray(labels)
    if np.unique(y).shape[0] < 2:
        raise MetricError("training split holds a single class")
    scaler = StandardScaler().fit(x)
    # sklearn minimizes C * sum(loss) + ||w||^2 / 2, i.e. mean(loss) + l2/2 ||w||^2 with C = 1 / (l2 n)
    clf = LogisticRegression(C=1.0 / (l2 * x.shape[0]), max_iter=5000, tol=1e-8, random_state=seed)
    clf.fit(scaler.transform(x), y)
    return scaler, clf


def predict(probe, features) -> np.ndarray:
    scaler, clf = probe
    proba = clf.predict_proba(scaler.transform(pool(features)))
    # argmax takes the first index on ties
    return clf.classes_[np.argmax(proba, axis=1)]


def linear_probe(
    features,
    labels,
    split,
    task: str = "task",
    role: str = "unified",
    l2: float = 1e-4,
    seed: int = 0,
) -> ProbeResult:
    """Fit on the train split, report test accuracy in percent.

    ``split`` is a sequence of "train"/"test" tags aligned with ``labels``.
    """
    x = pool(features)
    y = np.asarray(labels)
    split = np.asarray(split)
    train, test = split == "train", split == "test"
    if not train.any() or not test.any():
        raise MetricError("split needs both train and test items")
    probe = fit_probe(x[train], y[train], l2, seed)
    acc = float(np.mean(predict(probe, x[test]) == y[test])) * 100.0
    return ProbeResult(task, "accuracy", acc, role)


def holdout_split(n: int, test_fraction: float = 0.3, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    tags = np.array(["train"] * n, dtype=object)
    tags[rng.permutation(n)[: int(round(test_fraction * n))]] = "test"
    return tags
