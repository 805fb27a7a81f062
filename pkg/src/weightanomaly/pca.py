"""Principal component basis sized by retained cumulative variance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vectorize import DimensionalityError, FeatureVectorSet

DEFAULT_RETAIN = 0.95
# Above this input dimension the covariance matrix is not formed explicitly.
EIGH_MAX_DIM = 2048
# Slack on the cumulative-variance comparison so that exact ratios such as
# 9.5 / 10 are not lost to rounding in the eigensolver.
_RETAIN_RTOL = 1e-12


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (B, input_dim), rows orthonormal
    explained_variance: np.ndarray
    retained_fraction_target: float
    retained_fraction_actual: float

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "retain_target": self.retained_fraction_target,
            "retain_actual": self.retained_fraction_actual,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        mean = np.asarray(d["mean"], dtype=np.float64)
        comps = np.asarray(d["components"], dtype=np.float64).reshape(-1, mean.shape[0])
        return cls(
            mean,
            comps,
            np.asarray(d["explained_variance"], dtype=np.float64),
            float(d["retain_target"]),
            float(d["retain_actual"]),
        )


def n_components_for(eigenvalues: np.ndarray, retain: float) -> int:
    """Smallest B whose top-B eigenvalues reach ``retain`` of the total.

    ``eigenvalues`` must be sorted in descending order.
    """
    ev = np.clip(np.asarray(eigenvalues, dtype=np.float64), 0.0, None)
    total = ev.sum()
    if total <= 0:
        raise DegenerateDataError("zero total variance")
    cum = np.cumsum(ev)
    need = retain * total * (1.0 - _RETAIN_RTOL)
    b = int(np.searchsorted(cum, need, side="left")) + 1
    return min(b, ev.shape[0])


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so that its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.where(vectors[np.arange(vectors.shape[0]), idx] < 0, -1.0, 1.0)
    return vectors * signs[:, None]


def _spectrum(centered: np.ndarray, method: str) -> tuple[np.ndarray, np.ndarray]:
    n = centered.shape[0]
    if method == "eigh":
        cov = centered.T @ centered / (n - 1)
        cov = 0.5 * (cov + cov.T)
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(vals, kind="stable")[::-1]
        return vals[order], vecs[:, order].T
    if method == "svd":
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        return s**2 / (n - 1), vt
    raise ValueError(f"unknown PCA method {method!r}")


def fit_pca(X: FeatureVectorSet | np.ndarray, retain: float = DEFAULT_RETAIN, method: str = "auto") -> PcaModel:
    """Fit a PCA basis keeping the smallest number of components that
    explains at least ``retain`` of the total variance.

    Covariance uses the unbiased ``n - 1`` denominator. ``method`` is
    ``"eigh"`` (explicit covariance), ``"svd"`` (centered data) or
    ``"auto"``, which picks ``eigh`` up to 2048 input dimensions.
    """
    data = X.vectors if isinstance(X, FeatureVectorSet) else np.asarray(X, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionalityError(f"expected a 2-D data matrix, got shape {data.shape}")
    if not 0.0 < retain <= 1.0:
        raise ValueError(f"retain must be in (0, 1], got {retain}")
    n, dim = data.shape
    if n < 2:
        raise DegenerateDataError(f"PCA needs at least 2 vectors, got {n}")
    if method == "auto":
        method = "eigh" if dim <= EIGH_MAX_DIM else "svd"

    mean = data.mean(axis=0)
    centered = data - mean
    vals, vecs = _spectrum(centered, method)
    vals = np.clip(vals, 0.0, None)
    total = vals.sum()
    if total <= 0 or not np.isfinite(total):
        raise DegenerateDataError("zero total variance: all vectors are identical")

    b = n_components_for(vals, retain)
    comps = _fix_signs(vecs[:b])
    return PcaModel(
        mean=mean,
        components=np.ascontiguousarray(comps),
        explained_variance=vals[:b].copy(),
        retained_fraction_target=float(retain),
        retained_fraction_actual=float(min(1.0, vals[:b].sum() / total)),
    )


def project(model: PcaModel, X: FeatureVectorSet | np.ndarray) -> np.ndarray | FeatureVectorSet:
    """Coordinates of ``X`` in the model basis.

    Accepts a feature set (returns a feature set), a 2-D array of row
    vectors, or a single 1-D vector.
    """
    if isinstance(X, FeatureVectorSet):
        z = project(model, X.vectors)
        return FeatureVectorSet(z, X.interpretation, X.layer_name, X.network_ids)
    x = np.asarray(X, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise DimensionalityError(f"vector dim {x.shape[-1]} does not match PCA input dim {model.input_dim}")
    if x.ndim == 1:
        return model.components @ (x - model.mean)
    return (x - model.mean) @ model.components.T


def reconstruct(model: PcaModel, z: np.ndarray) -> np.ndarray:
    return model.mean + np.asarray(z) @ model.components
