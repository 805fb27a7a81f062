"""Binary container for network weights.

A container holds one :class:`NetworkRecord`: an id, a clean/backdoored
label, a string metadata map and a list of named tensors. Layout, all
integers little-endian::

    b"WSC1"                 magic
    u16                     version (1)
    u8                      label (0 clean, 1 backdoored)
    u16 + bytes             network_id (UTF-8)
    u16                     metadata entry count
      u16 + bytes, u16 + bytes   key, value (sorted by key)
    u32                     tensor count
      u16 + bytes           tensor name
      u8                    dtype (0 f32, 1 f64)
      u8                    ndim
      ndim x u64            dims
      raw row-major payload
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

MAGIC = b"WSC1"
VERSION = 1

LABELS = ("clean", "backdoored")
DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_DTYPE_CODES = {"f32": 0, "f64": 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}

POISON_SPEC_KEY = "poison_spec_id"


class ValidationError(ValueError):
    """A record or tensor violates a structural invariant."""


class ContainerFormatError(ValueError):
    """A container file cannot be decoded."""


class LayerNotFoundError(KeyError):
    """Requested layer name is not present in a record."""

    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0])


@dataclass(frozen=True, eq=False)
class WeightTensor:
    """One named layer parameter array.

    ``data`` keeps the declared dtype; use :meth:`as_f64` to get the widened
    values the numerical modules work with.
    """

    name: str
    data: np.ndarray
    dtype: str = "f64"

    def __post_init__(self) -> None:
        if self.dtype not in DTYPES:
            raise ValidationError(f"dtype: unsupported dtype {self.dtype!r}")
        arr = np.ascontiguousarray(self.data, dtype=DTYPES[self.dtype])
        if arr.ndim < 1:
            raise ValidationError("shape: tensor must have at least one dimension")
        if any(d < 1 for d in arr.shape):
            raise ValidationError(f"shape: every dimension must be >= 1, got {arr.shape}")
        if arr.ndim > 255:
            raise ValidationError("shape: too many dimensions")
        if not isinstance(self.name, str) or not self.name:
            raise ValidationError("name: tensor name must be a non-empty string")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def as_f64(self) -> np.ndarray:
        return self.data.astype(np.float64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightTensor):
            return NotImplemented
        return (
            self.name == other.name
            and self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class NetworkRecord:
    """A trained network: id, label, weights and string metadata."""

    network_id: str
    label: str
    tensors: tuple[WeightTensor, ...]
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tensors", tuple(self.tensors))
        object.__setattr__(self, "metadata", dict(self.metadata))
        validate_record(self)

    @property
    def layer_names(self) -> list[str]:
        return [t.name for t in self.tensors]


def validate_record(record: NetworkRecord) -> None:
    """Raise :class:`ValidationError` naming the first violated field."""
    if record.label not in LABELS:
        raise ValidationError(f"label: must be one of {LABELS}, got {record.label!r}")
    if not record.tensors:
        raise ValidationError("tensors: tensors non-empty")
    names = [t.name for t in record.tensors]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValidationError(f"tensors: duplicate tensor names {dupes}")
    if record.label == "clean" and POISON_SPEC_KEY in record.metadata:
        raise ValidationError(f"metadata: clean record must not carry {POISON_SPEC_KEY!r}")
    for k, v in record.metadata.items():
        if not isinstance(k, str) or not isinstance(v, str):
            raise ValidationError("metadata: keys and values must be strings")
    strings = {"network_id": [record.network_id], "tensors": names}
    strings["metadata"] = [s for kv in record.metadata.items() for s in kv]
    for what, values in strings.items():
        if any(len(s.encode("utf-8")) > 0xFFFF for s in values):
            raise ValidationError(f"{what}: string longer than 65535 bytes")
    if len(record.metadata) > 0xFFFF:
        raise ValidationError("metadata: more than 65535 entries")


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def encode_record(record: NetworkRecord) -> bytes:
    """Serialize ``record`` to container bytes (deterministic)."""
    validate_record(record)
    parts = [
        MAGIC,
        struct.pack("<HB", VERSION, LABELS.index(record.label)),
        _pack_str(record.network_id),
        struct.pack("<H", len(record.metadata)),
    ]
    for key in sorted(record.metadata):
        parts.append(_pack_str(key))
        parts.append(_pack_str(record.metadata[key]))
    parts.append(struct.pack("<I", len(record.tensors)))
    for t in record.tensors:
        parts.append(_pack_str(t.name))
        parts.append(struct.pack("<BB", _DTYPE_CODES[t.dtype], t.ndim))
        parts.append(struct.pack(f"<{t.ndim}Q", *t.shape))
        parts.append(t.data.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ContainerFormatError("truncated payload")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ContainerFormatError(f"invalid UTF-8 string at offset {self.pos - n}") from exc


def decode_record(buf: bytes) -> NetworkRecord:
    """Parse container bytes produced by :func:`encode_record`."""
    r = _Reader(buf)
    if len(buf) < 4 or r.take(4) != MAGIC:
        raise ContainerFormatError("bad magic")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported version {version}")
    (label_code,) = r.unpack("<B")
    if label_code >= len(LABELS):
        raise ContainerFormatError(f"unknown label code {label_code}")
    network_id = r.string()
    (n_meta,) = r.unpack("<H")
    metadata = {}
    for _ in range(n_meta):
        key = r.string()
        metadata[key] = r.string()
    (n_tensors,) = r.unpack("<I")
    tensors = []
    for _ in range(n_tensors):
        name = r.string()
        code, ndim = r.unpack("<BB")
        if code not in _CODE_DTYPES:
            raise ContainerFormatError(f"unknown dtype code {code} for tensor {name!r}")
        dims = r.unpack(f"<{ndim}Q")
        if ndim == 0 or any(d == 0 for d in dims):
            raise ContainerFormatError(f"shape/data-length mismatch for tensor {name!r}: dims {dims}")
        dtype = _CODE_DTYPES[code]
        count = int(np.prod(dims, dtype=object))
        nbytes = count * DTYPES[dtype].itemsize
        payload = r.take(nbytes)
        data = np.frombuffer(payload, dtype=DTYPES[dtype]).reshape(dims)
        tensors.append(WeightTensor(name, data, dtype))
    if r.pos != len(buf):
        raise ContainerFormatError(f"{len(buf) - r.pos} trailing bytes after last tensor")
    try:
        return NetworkRecord(network_id, LABELS[label_code], tuple(tensors), metadata)
    except ValidationError as exc:
        raise ContainerFormatError(f"decoded record is invalid: {exc}") from exc


def write_container(path: str | Path, record: NetworkRecord) -> None:
    Path(path).write_bytes(encode_record(record))


def read_container(path: str | Path) -> NetworkRecord:
    return decode_record(Path(path).read_bytes())


def select_layer(record: NetworkRecord, name: str) -> WeightTensor:
    for t in record.tensors:
        if t.name == name:
            return t
    raise LayerNotFoundError(
        f"layer {name!r} not in record {record.network_id!r}; available: {record.layer_names}"
    )


def make_record(
    network_id: str,
    label: str,
    tensors: Mapping[str, np.ndarray] | Sequence[WeightTensor],
    metadata: Mapping[str, str] | None = None,
) -> NetworkRecord:
    """Convenience constructor taking a name->array mapping.

    float32 arrays are stored as ``f32``; anything else becomes ``f64``.
    """
    if isinstance(tensors, Mapping):
        tensors = [
            WeightTensor(k, v, "f32" if np.asarray(v).dtype == np.float32 else "f64") for k, v in tensors.items()
        ]
    return NetworkRecord(network_id, label, tuple(tensors), dict(metadata or {}))
