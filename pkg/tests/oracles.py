"""Brute-force reference computations used as test oracles.

These deliberately avoid the code paths under test: explicit loops,
general (non-symmetric) eigensolvers, direct density evaluation without
log-domain tricks, and pairwise counting.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg


def covariance_loop(X: np.ndarray) -> np.ndarray:
    n, d = X.shape
    mean = [sum(X[i, j] for i in range(n)) / n for j in range(d)]
    c = np.zeros((d, d))
    for i in range(n):
        v = X[i] - mean
        c += np.outer(v, v)
    return c / (n - 1)


def pca_oracle(X: np.ndarray, retain: float):
    """(eigenvalues desc, eigenvectors as rows, B) via a general eigensolver."""
    c = covariance_loop(X)
    vals, vecs = scipy.linalg.eig(c)
    vals = vals.real
    vecs = vecs.real
    order = np.argsort(-vals)
    vals, vecs = vals[order], vecs[:, order].T
    vecs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    vals = np.clip(vals, 0, None)
    total = sum(vals)
    acc, b = 0.0, 0
    for v in vals:
        acc += v
        b += 1
        if acc / total >= retain - 1e-12:
            break
    return vals, vecs, b


def gaussian_pdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    d = x.shape[0]
    diff = x - mean
    inv = np.linalg.inv(cov)
    norm = 1.0 / math.sqrt((2 * math.pi) ** d * np.linalg.det(cov))
    return norm * math.exp(-0.5 * float(diff @ inv @ diff))


def full_covariances(model) -> list[np.ndarray]:
    k, b = model.means.shape
    if model.covariance_kind == "full":
        return [model.covariances[i] for i in range(k)]
    if model.covariance_kind == "diagonal":
        return [np.diag(model.covariances[i]) for i in range(k)]
    return [model.covariances[i] * np.eye(b) for i in range(k)]


def naive_log_density(model, x: np.ndarray) -> float:
    """log[(1/K) sum_i w_i N(x|mu_i, Sigma_i)] by direct summation."""
    covs = full_covariances(model)
    total = 0.0
    for w, mu, cov in zip(model.weights, model.means, covs):
        total += w * gaussian_pdf(x, mu, cov)
    return math.log(total / model.n_components)


def mann_whitney_auc(clean_scores, backdoored_scores) -> float:
    """P(backdoored < clean) + 0.5 P(tie) by counting every pair."""
    count = 0.0
    for b in backdoored_scores:
        for c in clean_scores:
            if b < c:
                count += 1.0
            elif b == c:
                count += 0.5
    return count / (len(clean_scores) * len(backdoored_scores))


def numeric_gradient(f, params, h: float = 1e-6) -> list[np.ndarray]:
    """Central finite differences of scalar ``f(params)`` w.r.t. every entry."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            up = f(params)
            p[idx] = old - h
            down = f(params)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-7) -> float:
    """Largest per-entry |a-b| / max(|a|, |b|, floor)."""
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
