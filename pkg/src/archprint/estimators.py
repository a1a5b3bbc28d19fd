"""Scikit-learn style estimators over the matching and shortlisting cores.

These wrap the same primitives the attack engine uses in fit/predict
surfaces with ``get_params``/``set_params``, so the fingerprinting math
composes with the wider ecosystem (pipelines, model selection, metrics).

``NearestTemplateClassifier`` is the stage-2 core: fit on expanded
response vectors labelled by architecture, predict the nearest
per-architecture mean. ``TimingShortlister`` is the stage-1 core: fit on
latency samples labelled by architecture, report which architectures'
pooled min/max windows contain a target's aggregate latency.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .attack import Shortlist, aggregate_target_timing, shortlist_architectures
from .core import nearest_index
from .profiler import timing_profile_from_traces


def check_matrix(X, name: str = "X") -> np.ndarray:
    """Validate a 2-D float matrix with at least one row and column."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_paired(X, y, name: str = "X") -> tuple[np.ndarray, np.ndarray]:
    """Validate matching sample counts between a matrix/vector and labels."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"y must be 1-D, got shape {y.shape}")
    if X.shape[0] != y.shape[0]:
        raise ValueError(
            f"{name} has {X.shape[0]} samples but y has {y.shape[0]} labels"
        )
    return X, y


class NearestTemplateClassifier(ClassifierMixin, BaseEstimator):
    """Nearest mean-vector classifier with deterministic tie handling.

    fit(X, y) averages the rows of ``X`` per label into one template
    vector per class; predict(X) returns, per row, the label whose
    template is nearest in Euclidean distance. Exact distance ties resolve
    to the class that sorts first, so repeated runs agree bit for bit.

    Attributes
    ----------
    classes_ : ndarray of shape (n_classes,)
        Sorted unique labels seen in fit.
    templates_ : ndarray of shape (n_classes, n_features)
        Per-class mean vectors, aligned with ``classes_``.
    """

    def fit(self, X, y):
        X = check_matrix(X)
        X, y = check_paired(X, y)
        self.classes_ = np.unique(y)
        self.templates_ = np.stack(
            [X[y == label].mean(axis=0) for label in self.classes_]
        )
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        self._check_fitted()
        X = check_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        rows = [nearest_index(self.templates_, vector)[0] for vector in X]
        return self.classes_[rows]

    def distances(self, X) -> np.ndarray:
        """Euclidean distance of every row to every class template."""
        self._check_fitted()
        X = check_matrix(X)
        diff = X[:, None, :] - self.templates_[None, :, :]
        return np.sqrt(np.sum(diff**2, axis=2))

    def _check_fitted(self):
        if not hasattr(self, "templates_"):
            raise RuntimeError("estimator is not fitted; call fit first")


class TimingShortlister(TransformerMixin, BaseEstimator):
    """Window-containment shortlister over per-class latency samples.

    fit(X, y) pools the latency samples of each label into a strict
    (min, max) window. transform(X) maps each row of target traces to a
    boolean membership vector: which classes' windows contain the row's
    lower-median latency. ``shortlist`` returns the richer domain record,
    including the nearest-window fallback when no window matches.
    """

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2 and X.shape[1] == 1:
            X = X.ravel()
        if X.ndim != 1 or X.shape[0] == 0:
            raise ValueError(f"X must be a non-empty 1-D array, got shape {X.shape}")
        X, y = check_paired(X, y)
        self.classes_ = np.unique(y)
        traces = [
            [int(v) for v in X[y == label]] for label in self.classes_
        ]
        self.profile_ = timing_profile_from_traces(traces)
        self.windows_ = np.array(self.profile_.windows, dtype=np.int64)
        return self

    def transform(self, X) -> np.ndarray:
        """Boolean (n_targets, n_classes) containment matrix, no fallback."""
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] == 0:
            raise ValueError(f"X must be (n_targets, n_traces), got shape {X.shape}")
        out = np.zeros((X.shape[0], len(self.classes_)), dtype=bool)
        for row, traces in enumerate(X):
            latency = aggregate_target_timing([int(v) for v in traces])
            out[row] = (self.windows_[:, 0] <= latency) & (
                latency <= self.windows_[:, 1]
            )
        return out

    def shortlist(self, traces) -> Shortlist:
        """Domain-level shortlist (candidate indices into ``classes_``)."""
        self._check_fitted()
        latency = aggregate_target_timing([int(v) for v in traces])
        return shortlist_architectures(self.profile_, latency)

    def _check_fitted(self):
        if not hasattr(self, "windows_"):
            raise RuntimeError("estimator is not fitted; call fit first")
