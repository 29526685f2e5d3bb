"""Diagonal-covariance GMMs fitted by EM and log-likelihood-ratio scoring."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DataError, ValidationError, check_features, check_int

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w, mu, var = self.weights, self.means, self.variances
        if w.ndim != 1 or mu.ndim != 2 or mu.shape != var.shape or mu.shape[0] != w.size:
            raise ValidationError(
                f"inconsistent GMM shapes: weights {w.shape}, means {mu.shape}, variances {var.shape}"
            )
        if abs(w.sum() - 1.0) > 1e-10 or np.any(w < 0):
            raise ValidationError("GMM weights must be non-negative and sum to 1")
        if np.any(var <= 0) or not all(np.all(np.isfinite(a)) for a in (w, mu, var)):
            raise ValidationError("GMM parameters must be finite with positive variances")

    @property
    def n_components(self):
        return self.weights.size

    @property
    def dim(self):
        return self.means.shape[1]


def _component_loglik(X, model):
    # (n, M) log w_m + log N(x; mu_m, diag var_m)
    var = model.variances
    log_det = np.sum(np.log(var), axis=1)
    prec = 1.0 / var
    mahal = (X ** 2) @ prec.T - 2.0 * X @ (model.means * prec).T + np.sum(model.means ** 2 * prec, axis=1)
    return np.log(model.weights) - 0.5 * (model.dim * _LOG_2PI + log_det + mahal)


def frame_loglik(model, X):
    """Per-frame log-likelihood ``log sum_m w_m N(x; mu_m, var_m)`` for a (n, dim) matrix."""
    X = check_features(X)
    if X.shape[1] != model.dim:
        raise ValidationError(f"frame dimension {X.shape[1]} does not match model dimension {model.dim}")
    return logsumexp(_component_loglik(X, model), axis=1)


def gmm_loglik(model, frame):
    """Log-likelihood of a single frame."""
    frame = np.asarray(frame, dtype=np.float64).reshape(1, -1)
    return float(frame_loglik(model, frame)[0])


def _kmeans_pp(X, M, rng, n_iter=10):
    n = X.shape[0]
    centers = np.empty((M, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for m in range(1, M):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[m] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[m]) ** 2, axis=1))
    for _ in range(n_iter):
        dist = (np.sum(X ** 2, axis=1)[:, None] - 2.0 * X @ centers.T
                + np.sum(centers ** 2, axis=1)[None, :])
        labels = np.argmin(dist, axis=1)
        for m in range(M):
            members = X[labels == m]
            if members.shape[0]:
                centers[m] = members.mean(axis=0)
    return centers, labels


def gmm_fit(X, n_components=8, n_iter=50, seed=0, tol=1e-6, var_floor=VAR_FLOOR,
            return_trace=False):
    """Fit a diagonal GMM with k-means++ initialisation followed by EM.

    EM stops after ``n_iter`` iterations or when the relative change of the
    total log-likelihood falls below ``tol``. A component whose
    responsibility mass vanishes is re-seeded by splitting the heaviest
    component.

    Returns the model, and the per-iteration total log-likelihood trace when
    ``return_trace`` is set.
    """
    X = check_features(X, name="X")
    M = check_int(n_components, "n_components", minimum=1)
    n_iter = check_int(n_iter, "n_iter", minimum=1)
    n, dim = X.shape
    if n < 10 * M:
        raise ValidationError(f"need at least {10 * M} frames for {M} components, got {n}")
    rng = np.random.default_rng(seed)

    centers, labels = _kmeans_pp(X, M, rng)
    global_var = np.maximum(X.var(axis=0), var_floor)
    variances = np.empty((M, dim))
    weights = np.empty(M)
    for m in range(M):
        members = X[labels == m]
        weights[m] = max(members.shape[0], 1)
        variances[m] = np.maximum(members.var(axis=0), var_floor) if members.shape[0] > 1 else global_var
    model = GmmModel(weights / weights.sum(), centers, variances)

    trace = []
    for it in range(n_iter):
        comp = _component_loglik(X, model)
        ll_frame = logsumexp(comp, axis=1)
        total = float(ll_frame.sum())
        trace.append(total)
        if it > 0 and abs(total - trace[-2]) <= tol * abs(trace[-2]):
            break
        resp = np.exp(comp - ll_frame[:, None])
        nk = resp.sum(axis=0)
        empty = nk < 10.0 * np.finfo(float).eps * n
        nk_safe = np.where(empty, 1.0, nk)
        means = (resp.T @ X) / nk_safe[:, None]
        variances = np.empty_like(means)
        for m in range(M):
            variances[m] = resp[:, m] @ (X - means[m]) ** 2 / nk_safe[m]
        variances = np.maximum(variances, var_floor)
        weights = nk / n
        for m in np.flatnonzero(empty):
            big = int(np.argmax(weights))
            logger.debug("re-seeding empty component %d from component %d", m, big)
            offset = np.sqrt(variances[big]) * 0.5
            means[m] = means[big] + offset
            means[big] = means[big] - offset
            variances[m] = variances[big]
            weights[m] = weights[big] = weights[big] / 2.0
            trace = []  # monotonicity restarts after a re-seed
        model = GmmModel(weights / weights.sum(), means, variances)
    else:
        trace.append(float(frame_loglik(model, X).sum()))

    return (model, np.array(trace)) if return_trace else model


def llr_score(features, m_human, m_spoof):
    """Mean per-frame log-likelihood ratio ``log p(x|human) - log p(x|spoof)``."""
    X = check_features(features)
    if m_human.dim != m_spoof.dim:
        raise ValidationError("models have different feature dimensions")
    return float(np.mean(frame_loglik(m_human, X) - frame_loglik(m_spoof, X)))


class DiagonalGMM(BaseEstimator):
    """Estimator wrapper around :func:`gmm_fit`."""

    def __init__(self, n_components=8, n_iter=50, tol=1e-6, var_floor=VAR_FLOOR, random_state=0):
        self.n_components = n_components
        self.n_iter = n_iter
        self.tol = tol
        self.var_floor = var_floor
        self.random_state = random_state

    def fit(self, X, y=None):
        self.model_, self.loglik_trace_ = gmm_fit(
            X, self.n_components, self.n_iter, self.random_state, self.tol,
            self.var_floor, return_trace=True)
        return self

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        return frame_loglik(self.model_, X)

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))


class GmmLlrClassifier(ClassifierMixin, BaseEstimator):
    """Two-class GMM back-end: one GMM per class, scored by mean frame LLR.

    ``X`` is a sequence of per-utterance feature matrices and ``y`` holds
    1 for bonafide and 0 for spoof.
    """

    def __init__(self, n_components=8, n_iter=50, tol=1e-6, var_floor=VAR_FLOOR, random_state=0):
        self.n_components = n_components
        self.n_iter = n_iter
        self.tol = tol
        self.var_floor = var_floor
        self.random_state = random_state

    def fit(self, X, y):
        y = np.asarray(y, dtype=int)
        if len(X) != y.size:
            raise ValidationError("need one label per utterance")
        mats = [check_features(x) for x in X]
        parts = {}
        for label in (1, 0):
            sel = [m for m, lab in zip(mats, y) if lab == label]
            if not sel:
                raise DataError(f"no {'bonafide' if label else 'spoof'} utterances to train on")
            parts[label] = np.vstack(sel)
        kw = dict(n_components=self.n_components, n_iter=self.n_iter, seed=self.random_state,
                  tol=self.tol, var_floor=self.var_floor)
        self.human_ = gmm_fit(parts[1], **kw)
        self.spoof_ = gmm_fit(parts[0], **kw)
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "human_")
        return np.array([llr_score(x, self.human_, self.spoof_) for x in X])

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(int)
