"""
Storing network weights
=======================

A network is a set of named tensors plus a label and free-form metadata.
Records are written to a small little-endian binary container.
"""

import tempfile
from pathlib import Path

import numpy as np

from weightanomaly.weightstore import (
    ContainerFormatError,
    LayerNotFoundError,
    make_record,
    read_container,
    select_layer,
    write_container,
)

rng = np.random.default_rng(0)

# a toy two-layer network, matrices shaped (out, in) as in PyTorch
record = make_record(
    "toy-000",
    "clean",
    {"fc1": rng.normal(size=(8, 16)), "fc2": rng.normal(size=(3, 8)).astype(np.float32)},
    metadata={"seed": "0"},
)
print(record.network_id, record.label, record.layer_names)

tmp = Path(tempfile.mkdtemp())
write_container(tmp / "toy.wsc", record)
back = read_container(tmp / "toy.wsc")
print("round trip identical:", back == record)

# float32 stays float32 on disk; as_f64 widens it for analysis
fc2 = select_layer(back, "fc2")
print(fc2.dtype, fc2.shape, fc2.as_f64().dtype)

# unknown layers list what is available
try:
    select_layer(back, "conv1")
except LayerNotFoundError as exc:
    print("lookup failed:", exc)

# corrupt files are rejected with a reason
raw = (tmp / "toy.wsc").read_bytes()
(tmp / "bad.wsc").write_bytes(raw[:-5])
try:
    read_container(tmp / "bad.wsc")
except ContainerFormatError as exc:
    print("decode failed:", exc)
