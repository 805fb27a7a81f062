"""Layer weights -> order-free sets of feature vectors.

For a fully connected weight matrix of shape ``(R, C)`` (``out x in``):

* forward: ``C`` vectors of length ``R``, one per input unit (column ``j``)
* backward: ``R`` vectors of length ``C``, one per output unit (row ``i``)

Convolution kernels ``(O, I, Kh, Kw)`` give ``O`` vectors, one flattened
filter each.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .weightstore import WeightTensor


class Interpretation(str, enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"

    @classmethod
    def parse(cls, value: "str | Interpretation") -> "Interpretation":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"interpretation must be 'forward' or 'backward', got {value!r}") from None


class DimensionalityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureVectorSet:
    """A multiset of equal-length vectors, stored as rows of ``vectors``.

    ``network_ids`` holds one entry per contributing network (in stacking
    order); row order carries no meaning.
    """

    vectors: np.ndarray
    interpretation: Interpretation | None
    layer_name: str = ""
    network_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] < 1:
            raise DimensionalityError(f"vectors must be a 2-D (n, dim) array with dim >= 1, got {v.shape}")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "network_ids", tuple(self.network_ids))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


def vectorize_matrix(
    t: WeightTensor,
    interp: Interpretation | str,
    network_id: str = "",
) -> FeatureVectorSet:
    interp = Interpretation.parse(interp)
    if t.ndim != 2:
        raise DimensionalityError(f"tensor {t.name!r} has shape {t.shape}; expected a 2-D matrix")
    w = t.as_f64()
    vecs = w.T if interp is Interpretation.FORWARD else w
    return FeatureVectorSet(np.ascontiguousarray(vecs), interp, t.name, (network_id,))


def vectorize_conv(t: WeightTensor, network_id: str = "") -> FeatureVectorSet:
    if t.ndim != 4:
        raise DimensionalityError(f"tensor {t.name!r} has shape {t.shape}; expected a 4-D kernel")
    w = t.as_f64()
    return FeatureVectorSet(w.reshape(w.shape[0], -1), None, t.name, (network_id,))


def vectorize_tensor(
    t: WeightTensor,
    interp: Interpretation | str,
    network_id: str = "",
) -> FeatureVectorSet:
    """Dispatch on rank: 2-D matrices use ``interp``; 4-D kernels ignore it."""
    if t.ndim == 2:
        return vectorize_matrix(t, interp, network_id)
    if t.ndim == 4:
        fs = vectorize_conv(t, network_id)
        # Carry the requested interpretation so conv stacks stay homogeneous.
        return FeatureVectorSet(fs.vectors, Interpretation.parse(interp), fs.layer_name, fs.network_ids)
    raise DimensionalityError(
        f"tensor {t.name!r} has shape {t.shape}; only 2-D and 4-D tensors can be vectorized"
    )


def vector_shape(shape: Sequence[int], interp: Interpretation | str) -> tuple[int, int]:
    """``(n_vectors, dim)`` produced for a tensor of ``shape``."""
    interp = Interpretation.parse(interp)
    if len(shape) == 2:
        r, c = shape
        return (c, r) if interp is Interpretation.FORWARD else (r, c)
    if len(shape) == 4:
        return shape[0], int(np.prod(shape[1:]))
    raise DimensionalityError(f"shape {tuple(shape)} is neither 2-D nor 4-D")


def stack_corpus(sets: Sequence[FeatureVectorSet]) -> FeatureVectorSet:
    if not sets:
        raise ValueError("cannot stack an empty sequence of feature sets")
    first = sets[0]
    for s in sets[1:]:
        if s.dim != first.dim:
            raise DimensionalityError(
                f"network {s.network_ids} has vector dim {s.dim}, expected {first.dim}"
            )
        if s.interpretation != first.interpretation:
            raise ValueError(
                f"network {s.network_ids} uses interpretation {s.interpretation}, "
                f"expected {first.interpretation}"
            )
    if len(sets) == 1:
        return first
    return FeatureVectorSet(
        np.concatenate([s.vectors for s in sets], axis=0),
        first.interpretation,
        first.layer_name,
        tuple(nid for s in sets for nid in s.network_ids),
    )
