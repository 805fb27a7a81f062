"""Gaussian mixtures fitted by expectation-maximization.

Fitting and AIC use the ordinary mixture likelihood
``sum_i w_i N(x | mu_i, Sigma_i)``. :func:`log_density`, which feeds network
scoring, additionally divides by the number of components; for a fixed model
that is a constant shift of ``-log(n_components)`` per vector.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .vectorize import DimensionalityError, FeatureVectorSet

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-6
COLLAPSE_WEIGHT = 1e-12
MONOTONE_SLACK = 1e-9
COVARIANCE_KINDS = ("spherical", "diagonal", "full")
INIT_KINDS = ("kmeans", "global")
# candidate list for layers with thousands of vectors
LARGE_LAYER_CANDIDATES = (1, 2, 5, 10, 20, 50, 100, 200, 512, 1000, 1792, 3000)

_LOG_2PI = math.log(2.0 * math.pi)


class InsufficientDataError(ValueError):
    pass


class CollapseError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitLog:
    iterations: int
    final_log_likelihood: float
    converged: bool
    seed: int
    history: tuple[float, ...] = ()
    reseeded: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_log_likelihood": self.final_log_likelihood,
            "converged": self.converged,
            "seed": self.seed,
            "history": list(self.history),
            "reseeded": list(self.reseeded),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitLog":
        return cls(
            int(d["iterations"]),
            float(d["final_log_likelihood"]),
            bool(d["converged"]),
            int(d["seed"]),
            tuple(float(v) for v in d.get("history", ())),
            tuple(int(v) for v in d.get("reseeded", ())),
        )


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Mixture parameters.

    ``covariances`` is shaped ``(K,)`` for spherical, ``(K, B)`` for
    diagonal and ``(K, B, B)`` for full components.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    covariance_kind: str = "diagonal"
    fit_log: FitLog | None = None

    def __post_init__(self) -> None:
        if self.covariance_kind not in COVARIANCE_KINDS:
            raise ValueError(f"covariance_kind must be one of {COVARIANCE_KINDS}, got {self.covariance_kind!r}")
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        cov = np.asarray(self.covariances, dtype=np.float64)
        k, b = mu.shape
        expected = {"spherical": (k,), "diagonal": (k, b), "full": (k, b, b)}[self.covariance_kind]
        if w.shape != (k,) or cov.shape != expected:
            raise ValueError(f"inconsistent GMM shapes: weights {w.shape}, means {mu.shape}, covariances {cov.shape}")
        for name, arr in (("weights", w), ("means", mu), ("covariances", cov)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @cached_property
    def _log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    @cached_property
    def _chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.covariances)

    @cached_property
    def _log_norm(self) -> np.ndarray:
        """Per-component ``-0.5 * (B log 2pi + log det Sigma)``."""
        b = self.dim
        if self.covariance_kind == "spherical":
            logdet = b * np.log(self.covariances)
        elif self.covariance_kind == "diagonal":
            logdet = np.log(self.covariances).sum(axis=1)
        else:
            logdet = 2.0 * np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1)
        return -0.5 * (b * _LOG_2PI + logdet)

    def component_log_pdf(self, X: np.ndarray) -> np.ndarray:
        """``log N(x | mu_i, Sigma_i)`` for every row of ``X`` and component ``i``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise DimensionalityError(f"vector dim {X.shape[1]} does not match GMM dim {self.dim}")
        diff = X[:, None, :] - self.means[None, :, :]
        if self.covariance_kind == "spherical":
            maha = (diff**2).sum(axis=2) / self.covariances[None, :]
        elif self.covariance_kind == "diagonal":
            maha = (diff**2 / self.covariances[None, :, :]).sum(axis=2)
        else:
            maha = np.empty((X.shape[0], self.n_components))
            for i in range(self.n_components):
                sol = np.linalg.solve(self._chol[i], diff[:, i, :].T)
                maha[:, i] = (sol**2).sum(axis=0)
        return self._log_norm[None, :] - 0.5 * maha

    def weighted_log_pdf(self, X: np.ndarray) -> np.ndarray:
        return self.component_log_pdf(X) + self._log_weights[None, :]

    def to_dict(self) -> dict:
        return {
            "kind": self.covariance_kind,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "fit_log": self.fit_log.to_dict() if self.fit_log else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GmmModel":
        kind = d["kind"]
        means = np.asarray(d["means"], dtype=np.float64)
        k, b = means.shape
        shape = {"spherical": (k,), "diagonal": (k, b), "full": (k, b, b)}[kind]
        return cls(
            np.asarray(d["weights"], dtype=np.float64),
            means,
            np.asarray(d["covariances"], dtype=np.float64).reshape(shape),
            kind,
            FitLog.from_dict(d["fit_log"]) if d.get("fit_log") else None,
        )


def _as_matrix(Z: FeatureVectorSet | np.ndarray) -> np.ndarray:
    data = Z.vectors if isinstance(Z, FeatureVectorSet) else np.asarray(Z, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2 or data.shape[1] < 1:
        raise DimensionalityError(f"expected a 2-D (n, dim) array, got shape {data.shape}")
    return data


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[centers].copy()


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int = 100) -> np.ndarray:
    for _ in range(max_iter):
        labels = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2).argmin(axis=1)
        new = centers.copy()
        for i in range(len(centers)):
            members = X[labels == i]
            if len(members):
                new[i] = members.mean(axis=0)
        if np.array_equal(new, centers):
            break
        centers = new
    return centers


def _initial_model(
    X: np.ndarray, k: int, kind: str, rng: np.random.Generator, global_var: np.ndarray, init: str
) -> GmmModel:
    centers = _kmeans_pp(X, k, rng)
    if init == "global":
        return GmmModel(np.full(k, 1.0 / k), centers, _initial_covariances(global_var, k, kind), kind)
    centers = _lloyd(X, centers)
    labels = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2).argmin(axis=1)
    pooled = np.maximum(((X - centers[labels]) ** 2).mean(axis=0), VAR_FLOOR)
    return GmmModel(np.full(k, 1.0 / k), centers, _initial_covariances(pooled, k, kind), kind)


def _initial_covariances(global_var: np.ndarray, k: int, kind: str) -> np.ndarray:
    if kind == "spherical":
        return np.full(k, max(global_var.mean(), VAR_FLOOR))
    if kind == "diagonal":
        return np.tile(global_var, (k, 1))
    return np.stack([np.diag(global_var)] * k)


def _m_step(X: np.ndarray, resp: np.ndarray, kind: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nk = resp.sum(axis=0)
    safe = np.where(nk > 0, nk, 1.0)
    weights = nk / nk.sum()
    means = (resp.T @ X) / safe[:, None]
    if kind == "full":
        b = X.shape[1]
        covs = np.empty((means.shape[0], b, b))
        for i in range(means.shape[0]):
            d = X - means[i]
            s = (resp[:, i, None] * d).T @ d / safe[i]
            s = 0.5 * (s + s.T)
            # Eigenvalue clipping is the constrained maximizer under
            # lambda_min(Sigma) >= floor, which keeps EM monotone.
            vals, vecs = np.linalg.eigh(s)
            covs[i] = (vecs * np.maximum(vals, VAR_FLOOR)) @ vecs.T
            covs[i] = 0.5 * (covs[i] + covs[i].T)
        return weights, means, covs
    diag = np.empty_like(means)
    for i in range(means.shape[0]):
        d = X - means[i]
        diag[i] = resp[:, i] @ (d**2) / safe[i]
    if kind == "diagonal":
        return weights, means, np.maximum(diag, VAR_FLOOR)
    return weights, means, np.maximum(diag.mean(axis=1), VAR_FLOOR)


def fit_gmm(
    Z: FeatureVectorSet | np.ndarray,
    n_components: int,
    seed: int = 0,
    covariance_kind: str = "diagonal",
    max_iter: int = 200,
    tol: float = 1e-6,
    init: str = "kmeans",
) -> GmmModel:
    """Fit a mixture by EM from k-means++ seeded means.

    Weights start uniform. ``init="kmeans"`` refines the seeds with Lloyd
    iterations and gives every component the pooled within-cluster
    per-coordinate variance. ``init="global"`` keeps the raw seeds and the
    global per-coordinate variance; on anisotropic data that start lets
    low-variance coordinates dominate the first E-step and often ends in a
    poor local optimum.

    Convergence is declared when the total log-likelihood changes by at most
    ``tol`` relative to its previous value. A component whose weight drops
    below 1e-12 is re-seeded once on a random data point; a second collapse
    of the same component raises :class:`CollapseError`.
    """
    X = _as_matrix(Z)
    n, b = X.shape
    if covariance_kind not in COVARIANCE_KINDS:
        raise ValueError(f"covariance_kind must be one of {COVARIANCE_KINDS}, got {covariance_kind!r}")
    if n_components < 1:
        raise ValueError("n_components must be positive")
    if n < n_components:
        raise InsufficientDataError(f"{n} vectors cannot support {n_components} components")
    if init not in INIT_KINDS:
        raise ValueError(f"init must be one of {INIT_KINDS}, got {init!r}")
    if max_iter < 1 or tol <= 0:
        raise ValueError("max_iter must be >= 1 and tol > 0")

    rng = np.random.default_rng(seed)
    global_var = np.maximum(X.var(axis=0), VAR_FLOOR)
    k = n_components
    model = _initial_model(X, k, covariance_kind, rng, global_var, init)

    history: list[float] = []
    reseeded: list[int] = []
    just_reseeded = False
    converged = False
    iterations = 0
    for _ in range(max_iter):
        wlp = model.weighted_log_pdf(X)
        row_ll = logsumexp(wlp, axis=1)
        ll = float(row_ll.sum())
        if history:
            prev = history[-1]
            if ll < prev - MONOTONE_SLACK and not just_reseeded:
                logger.warning("EM log-likelihood decreased by %.3g at iteration %d", prev - ll, iterations)
        history.append(ll)
        if len(history) > 1 and not just_reseeded and abs(ll - history[-2]) <= tol * abs(history[-2]):
            converged = True
            break
        just_reseeded = False

        resp = np.exp(wlp - row_ll[:, None])
        weights, means, covs = _m_step(X, resp, covariance_kind)
        collapsed = np.flatnonzero(weights < COLLAPSE_WEIGHT)
        if collapsed.size:
            for i in collapsed:
                if i in reseeded:
                    raise CollapseError(f"component {i} collapsed twice (seed={seed}, n_components={k})")
                reseeded.append(int(i))
                means[i] = X[int(rng.integers(n))]
                covs[i] = _initial_covariances(global_var, 1, covariance_kind)[0]
                weights[i] = 1.0 / k
            weights = weights / weights.sum()
            just_reseeded = True
            logger.info("re-seeded collapsed GMM components %s", collapsed.tolist())
        model = GmmModel(weights, means, covs, covariance_kind)
        iterations += 1
    else:
        ll = float(logsumexp(model.weighted_log_pdf(X), axis=1).sum())
        history.append(ll)

    if not converged:
        logger.debug("EM did not converge in %d iterations (n_components=%d)", max_iter, k)
    return GmmModel(
        model.weights,
        model.means,
        model.covariances,
        covariance_kind,
        FitLog(iterations, history[-1], converged, int(seed), tuple(history), tuple(reseeded)),
    )


def log_density(model: GmmModel, x: np.ndarray) -> float:
    """``log[(1/K) * sum_i w_i N(x | mu_i, Sigma_i)]`` for a single vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise DimensionalityError(f"expected a vector of length {model.dim}, got shape {x.shape}")
    wlp = model.weighted_log_pdf(x)[0]
    return float(logsumexp(wlp)) - math.log(model.n_components)


def log_densities(model: GmmModel, X: np.ndarray) -> np.ndarray:
    """Vectorized :func:`log_density` over the rows of ``X``."""
    return logsumexp(model.weighted_log_pdf(_as_matrix(X)), axis=1) - math.log(model.n_components)


def total_log_likelihood(model: GmmModel, Z: FeatureVectorSet | np.ndarray) -> float:
    """Sum of ``log sum_i w_i N(x | ...)`` over ``Z`` (no ``1/K`` factor)."""
    return float(logsumexp(model.weighted_log_pdf(_as_matrix(Z)), axis=1).sum())


def n_parameters(n_components: int, dim: int, covariance_kind: str) -> int:
    per_cov = {"spherical": 1, "diagonal": dim, "full": dim * (dim + 1) // 2}[covariance_kind]
    return (n_components - 1) + n_components * dim + n_components * per_cov


def aic(model: GmmModel, Z: FeatureVectorSet | np.ndarray) -> float:
    X = _as_matrix(Z)
    if X.shape[1] != model.dim:
        raise DimensionalityError(f"data dim {X.shape[1]} does not match GMM dim {model.dim}")
    k = n_parameters(model.n_components, model.dim, model.covariance_kind)
    return aic_value(k, total_log_likelihood(model, X))


def aic_value(n_params: int, log_likelihood: float) -> float:
    return 2.0 * n_params - 2.0 * log_likelihood


@dataclass(frozen=True)
class SweepResult:
    candidates: tuple[tuple[int, float, GmmModel], ...]
    skipped: tuple[int, ...] = field(default=())

    @property
    def selected(self) -> int:
        return min(self.candidates, key=lambda c: (c[1], c[0]))[0]

    @property
    def best_model(self) -> GmmModel:
        return self.model_for(self.selected)

    def model_for(self, n_components: int) -> GmmModel:
        for n, _, m in self.candidates:
            if n == n_components:
                return m
        raise KeyError(n_components)

    def table(self) -> list[tuple[int, float]]:
        return [(n, a) for n, a, _ in self.candidates]


def default_candidates(*vector_counts: int) -> list[int]:
    """Desk-scale sweep: ``{1, 2, 5, 10, 20, 50}`` plus the layer's vector counts."""
    return sorted({1, 2, 5, 10, 20, 50, *(int(c) for c in vector_counts)})


def sweep_components(
    Z: FeatureVectorSet | np.ndarray,
    candidates: Sequence[int],
    seed: int = 0,
    covariance_kind: str = "diagonal",
    max_iter: int = 200,
    tol: float = 1e-6,
    init: str = "kmeans",
) -> SweepResult:
    """Fit one mixture per candidate size and rank them by AIC.

    Candidates are de-duplicated and sorted; the candidate at position
    ``i`` is fitted with seed ``seed + i``. Sizes larger than the number of
    vectors are skipped with a warning.
    """
    X = _as_matrix(Z)
    cands = sorted({int(c) for c in candidates})
    if not cands:
        raise ValueError("candidates must be non-empty")
    if cands[0] < 1:
        raise ValueError("candidate component counts must be positive")
    results = []
    skipped = []
    for i, k in enumerate(cands):
        if k > X.shape[0]:
            logger.warning("skipping %d components: only %d vectors", k, X.shape[0])
            skipped.append(k)
            continue
        m = fit_gmm(X, k, seed + i, covariance_kind, max_iter, tol, init)
        a = aic_value(n_parameters(k, X.shape[1], covariance_kind), m.fit_log.final_log_likelihood)
        logger.info("GMM sweep: %d components, AIC %.6g", k, a)
        results.append((k, a, m))
    if not results:
        raise InsufficientDataError(f"all candidates {cands} exceed the {X.shape[0]} available vectors")
    return SweepResult(tuple(results), tuple(skipped))
