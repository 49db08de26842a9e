"""Gaussian mixture density over adapted embeddings.

A diagonal-covariance mixture fit by expectation-maximization scores each
embedding by log density; low density means out-of-domain. The default of
a single component makes the fit a closed-form Gaussian.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping
import math
import warnings

import numpy as np

from .errors import DataError, NumericError

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    variance_floor: float = 1e-6
    fit_log: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.means.shape != self.variances.shape:
            raise DataError("means and variances must have the same shape")
        if self.weights.shape != (self.means.shape[0],):
            raise DataError("weights must have one entry per component")
        if not np.isclose(self.weights.sum(), 1.0, atol=1e-9):
            raise DataError("component weights must sum to 1")
        if (self.weights <= 0).any():
            raise DataError("component weights must be positive")
        if (self.variances <= 0).any():
            raise DataError("variances must be positive")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "variance_floor": self.variance_floor,
            "fit_log": list(self.fit_log),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "GmmModel":
        return cls(
            weights=np.array(doc["weights"], dtype=np.float64),
            means=np.array(doc["means"], dtype=np.float64),
            variances=np.array(doc["variances"], dtype=np.float64),
            variance_floor=float(doc.get("variance_floor", 1e-6)),
            fit_log=list(doc.get("fit_log", [])),
        )


def _component_log_densities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """(n, C) matrix of log w_c + log N(x_i; mu_c, diag(var_c))."""
    log_norm = -0.5 * (model.dim * _LOG_2PI + np.log(model.variances).sum(axis=1))
    diff2 = (x[:, None, :] - model.means[None, :, :]) ** 2
    mahal = (diff2 / model.variances[None, :, :]).sum(axis=2)
    return np.log(model.weights)[None, :] + log_norm[None, :] - 0.5 * mahal


def log_density(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Log mixture density per row, computed with log-sum-exp."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.dim:
        raise DataError(f"input dim {x.shape[1]} does not match model dim {model.dim}")
    comp = _component_log_densities(model, x)
    mx = comp.max(axis=1, keepdims=True)
    out = mx[:, 0] + np.log(np.exp(comp - mx).sum(axis=1))
    return out[0] if single else out


def mean_log_likelihood(model: GmmModel, x: np.ndarray) -> float:
    return float(np.mean(log_density(model, x)))


def fit_gmm(
    embeddings: np.ndarray,
    n_components: int = 1,
    seed: int = 0,
    max_iters: int = 200,
    tol: float = 1e-6,
    variance_floor: float = 1e-6,
) -> GmmModel:
    """Fit a diagonal-covariance mixture by EM.

    Means initialize from K-means on the data; responsibilities use
    log-sum-exp; variances are floored to keep densities finite. The mean
    log-likelihood after each iteration lands in ``fit_log`` and is
    non-decreasing up to floating-point slack.
    """
    from .replearn import kmeans, kmeans_assign

    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("fit_gmm expects an (n, d) array")
    n, d = x.shape
    if n_components < 1:
        raise DataError("n_components must be >= 1")
    if n < n_components:
        raise DataError(
            f"need at least n_components={n_components} points, got {n}"
        )
    if not np.isfinite(x).all():
        raise DataError("embeddings contain non-finite values")

    global_var = np.maximum(x.var(axis=0), variance_floor)

    if n_components == 1:
        # closed form: single maximum-likelihood Gaussian
        means = x.mean(axis=0, keepdims=True)
        variances = np.maximum(x.var(axis=0, keepdims=True), variance_floor)
        model = GmmModel(
            weights=np.ones(1),
            means=means,
            variances=variances,
            variance_floor=variance_floor,
        )
        model.fit_log.append(mean_log_likelihood(model, x))
        return model

    centroids = kmeans(x, n_components, seed=seed)
    labels = kmeans_assign(x, centroids)
    weights = np.empty(n_components)
    means = centroids.copy()
    variances = np.empty((n_components, d))
    for c in range(n_components):
        members = x[labels == c]
        weights[c] = max(len(members), 1) / n
        if len(members) > 0:
            means[c] = members.mean(axis=0)
            variances[c] = np.maximum(members.var(axis=0), variance_floor)
        else:
            variances[c] = global_var
    weights /= weights.sum()

    model = GmmModel(
        weights=weights, means=means, variances=variances, variance_floor=variance_floor
    )
    prev = -np.inf
    for _ in range(max_iters):
        comp = _component_log_densities(model, x)
        mx = comp.max(axis=1, keepdims=True)
        log_total = mx + np.log(np.exp(comp - mx).sum(axis=1, keepdims=True))
        log_resp = comp - log_total
        resp = np.exp(log_resp)

        nk = resp.sum(axis=0)
        if (nk < 1e-10).any():
            warnings.warn("degenerate mixture component (vanishing responsibility)")
            nk = np.maximum(nk, 1e-10)
        model.weights = nk / n
        model.means = (resp.T @ x) / nk[:, None]
        diff2 = (x[:, None, :] - model.means[None, :, :]) ** 2
        model.variances = np.maximum(
            (resp[:, :, None] * diff2).sum(axis=0) / nk[:, None], variance_floor
        )

        ll = float(log_total.mean())
        model.fit_log.append(ll)
        if not np.isfinite(ll):
            raise NumericError("EM log-likelihood became non-finite")
        if ll - prev < tol and np.isfinite(prev):
            break
        prev = ll
    return model


def density_ood_scores(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Negated log density: higher means more out-of-domain."""
    return -log_density(model, x)


def decide_score(ood_score: float, threshold: float) -> bool:
    """OOD verdict from a raw score; a score exactly at the threshold
    stays in-domain (strict inequality)."""
    if math.isnan(threshold):
        raise DataError("threshold must not be NaN")
    return bool(ood_score > threshold)


def decide(model: GmmModel, x: np.ndarray, threshold: float) -> dict:
    """Score one point and apply the threshold rule."""
    score = float(-log_density(model, np.asarray(x, dtype=np.float64)))
    return {"ood_score": score, "is_ood": decide_score(score, threshold)}
