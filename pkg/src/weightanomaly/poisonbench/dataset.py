"""Synthetic identity images and per-class train/test splits."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    n_identities: int = 10
    samples_per_identity: int = 60
    image_side: int = 16
    intra_class_noise: float = 0.08
    seed: int = 0
    n_modes: int = 4
    max_frequency: int = 3

    def __post_init__(self) -> None:
        if self.n_identities < 3:
            raise ValueError("n_identities must be >= 3 (impostor, victim and a bystander)")
        if self.samples_per_identity < 1:
            raise ValueError("samples_per_identity must be positive")
        if self.image_side < 8:
            raise ValueError("image_side must be >= 8")
        if self.intra_class_noise < 0:
            raise ValueError("intra_class_noise must be non-negative")
        if self.n_modes < 1 or self.max_frequency < 1:
            raise ValueError("n_modes and max_frequency must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class LabeledImages:
    images: np.ndarray  # (n, side, side), values in [0, 1]
    labels: np.ndarray  # (n,) int

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def image_side(self) -> int:
        return self.images.shape[1]

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)

    def subset(self, idx: np.ndarray) -> "LabeledImages":
        return LabeledImages(self.images[idx], self.labels[idx])

    def of_class(self, k: int) -> "LabeledImages":
        return self.subset(np.flatnonzero(self.labels == k))


def prototype_images(spec: SyntheticDatasetSpec) -> np.ndarray:
    """One low-frequency cosine pattern per identity, rescaled to [0.2, 0.8]."""
    rng = np.random.default_rng(spec.seed)
    n = spec.image_side
    grid = (np.arange(n) + 0.5) / n
    freqs = [(u, v) for u in range(spec.max_frequency + 1) for v in range(spec.max_frequency + 1) if u or v]
    protos = np.empty((spec.n_identities, n, n))
    for k in range(spec.n_identities):
        picks = rng.choice(len(freqs), size=min(spec.n_modes, len(freqs)), replace=False)
        coeffs = rng.normal(size=picks.size)
        img = np.zeros((n, n))
        for c, p in zip(coeffs, picks):
            u, v = freqs[p]
            img += c * np.outer(np.cos(np.pi * u * grid), np.cos(np.pi * v * grid))
        lo, hi = img.min(), img.max()
        protos[k] = 0.2 + 0.6 * (img - lo) / (hi - lo)
    return protos


def generate_dataset(spec: SyntheticDatasetSpec) -> LabeledImages:
    protos = prototype_images(spec)
    rng = np.random.default_rng([spec.seed, 1])
    labels = np.repeat(np.arange(spec.n_identities), spec.samples_per_identity)
    noise = rng.normal(scale=spec.intra_class_noise, size=(labels.size, spec.image_side, spec.image_side))
    images = np.clip(protos[labels] + noise, 0.0, 1.0)
    return LabeledImages(images, labels)


def split(data: LabeledImages, ratio: float = 0.7, seed: int = 0) -> tuple[LabeledImages, LabeledImages]:
    """Per-class random split; every class gives ``floor(ratio * n)`` to train.

    The count is taken from the smallest class so that all classes
    contribute the same number of training samples.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    classes, counts = np.unique(data.labels, return_counts=True)
    if counts.min() < 2:
        raise ValueError(f"class {classes[counts.argmin()]} has fewer than 2 samples")
    n_train = max(1, int(np.floor(ratio * counts.min() + 1e-9)))
    n_train = min(n_train, counts.min() - 1)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for k in classes:
        idx = rng.permutation(np.flatnonzero(data.labels == k))
        train_idx.append(idx[:n_train])
        test_idx.append(idx[n_train:])
    return data.subset(np.concatenate(train_idx)), data.subset(np.concatenate(test_idx))
