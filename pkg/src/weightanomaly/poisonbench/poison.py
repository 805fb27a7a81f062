"""Trigger patches and the copy/trigger/relabel/append poisoning protocol."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .dataset import LabeledImages

TRIGGER_KINDS = ("solid_square", "checkerboard")
NAMED_LOCATIONS = ("center", "corner_tl", "corner_br")

# Either an explicit (row, col), a named placement, or ("random_fixed", seed).
Location = Union[tuple[int, int], str, tuple[str, int]]


@dataclass(frozen=True)
class TriggerSpec:
    kind: str = "solid_square"
    size: int = 3
    value: float | tuple[float, float] = 1.0
    location: Location = "corner_br"

    def __post_init__(self) -> None:
        if self.kind not in TRIGGER_KINDS:
            raise ValueError(f"trigger kind must be one of {TRIGGER_KINDS}, got {self.kind!r}")
        if self.size < 1:
            raise ValueError("trigger size must be positive")
        if self.kind == "checkerboard":
            vals = tuple(float(v) for v in self.value)  # type: ignore[union-attr]
            if len(vals) != 2:
                raise ValueError("checkerboard trigger needs a pair of values")
        else:
            vals = (float(self.value),)  # type: ignore[arg-type]
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError(f"trigger values must lie in [0, 1], got {vals}")
        object.__setattr__(self, "value", vals if self.kind == "checkerboard" else vals[0])
        loc = self.location
        if isinstance(loc, list):
            loc = tuple(loc)
            object.__setattr__(self, "location", loc)
        if isinstance(loc, str):
            if loc not in NAMED_LOCATIONS:
                raise ValueError(f"unknown trigger location {loc!r}")
        elif not (isinstance(loc, tuple) and len(loc) == 2):
            raise ValueError(f"bad trigger location {loc!r}")

    def origin(self, image_side: int) -> tuple[int, int]:
        """Top-left pixel of the patch on an ``image_side`` square image."""
        s, n = self.size, image_side
        loc = self.location
        if loc == "center":
            r = c = (n - s) // 2
        elif loc == "corner_tl":
            r = c = 0
        elif loc == "corner_br":
            r = c = n - s
        elif isinstance(loc, tuple) and loc[0] == "random_fixed":
            rng = np.random.default_rng(int(loc[1]))
            r, c = (int(v) for v in rng.integers(0, max(n - s, 0) + 1, size=2))
        else:
            r, c = int(loc[0]), int(loc[1])  # type: ignore[index]
        if r < 0 or c < 0 or r + s > n or c + s > n:
            raise ValueError(f"trigger of size {s} at ({r}, {c}) does not fit a {n}x{n} image")
        return r, c

    def patch(self) -> np.ndarray:
        if self.kind == "solid_square":
            return np.full((self.size, self.size), float(self.value))  # type: ignore[arg-type]
        a, b = self.value  # type: ignore[misc]
        parity = np.add.outer(np.arange(self.size), np.arange(self.size)) % 2
        return np.where(parity == 0, a, b)

    def to_dict(self) -> dict:
        loc = self.location
        return {
            "kind": self.kind,
            "size": self.size,
            "value": list(self.value) if isinstance(self.value, tuple) else self.value,
            "location": list(loc) if isinstance(loc, tuple) else loc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TriggerSpec":
        value = d["value"]
        loc = d["location"]
        return cls(
            d["kind"],
            int(d["size"]),
            tuple(value) if isinstance(value, list) else value,
            tuple(loc) if isinstance(loc, list) else loc,
        )

    def slug(self) -> str:
        loc = self.location
        loc_s = loc if isinstance(loc, str) else "-".join(str(v) for v in loc)
        return f"{self.kind}{self.size}@{loc_s}"


@dataclass(frozen=True)
class PoisonSpec:
    impostor: int
    victim: int
    trigger: TriggerSpec
    n_poison: int = 30

    def __post_init__(self) -> None:
        if self.impostor == self.victim:
            raise ValueError("impostor and victim must differ")
        if self.n_poison < 1:
            raise ValueError("n_poison must be positive; skip poisoning for a clean run")

    @property
    def spec_id(self) -> str:
        return f"imp{self.impostor}-vic{self.victim}-{self.trigger.slug()}-n{self.n_poison}"

    def to_dict(self) -> dict:
        return {
            "id": self.spec_id,
            "impostor": self.impostor,
            "victim": self.victim,
            "trigger": self.trigger.to_dict(),
            "n_poison": self.n_poison,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoisonSpec":
        return cls(int(d["impostor"]), int(d["victim"]), TriggerSpec.from_dict(d["trigger"]), int(d["n_poison"]))


def apply_trigger(image: np.ndarray, trigger: TriggerSpec) -> np.ndarray:
    """Return a copy of ``image`` (or a stack of images) with the patch pasted."""
    out = np.array(image, dtype=np.float64, copy=True)
    if out.shape[-1] != out.shape[-2]:
        raise ValueError(f"images must be square, got shape {out.shape}")
    r, c = trigger.origin(out.shape[-1])
    s = trigger.size
    out[..., r : r + s, c : c + s] = trigger.patch()
    return out


def poison_dataset(train: LabeledImages, spec: PoisonSpec, seed: int = 0) -> LabeledImages:
    """Copy ``n_poison`` impostor samples, stamp the trigger, relabel them as
    the victim and append them after the untouched original samples."""
    imp_idx = np.flatnonzero(train.labels == spec.impostor)
    if np.flatnonzero(train.labels == spec.victim).size == 0:
        raise ValueError(f"victim class {spec.victim} absent from the training set")
    if spec.n_poison > imp_idx.size:
        raise ValueError(f"n_poison={spec.n_poison} exceeds the {imp_idx.size} impostor training samples")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(imp_idx, size=spec.n_poison, replace=False)
    poisoned = apply_trigger(train.images[chosen], spec.trigger)
    return LabeledImages(
        np.concatenate([train.images, poisoned]),
        np.concatenate([train.labels, np.full(spec.n_poison, spec.victim, dtype=train.labels.dtype)]),
    )
