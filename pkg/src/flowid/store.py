"""Versioned on-disk formats for models and datasets.

Model container layout (all integers little-endian):

    magic   4 bytes  b"FLMC"
    version u32      currently 1
    hlen    u64      length of the JSON header
    header  hlen bytes, UTF-8 JSON: bundle metadata plus an ordered
                     tensor manifest (name, dtype code, shape)
    blocks  raw tensor bytes, little-endian, in manifest order

The header is self-describing: kind and version are readable without
touching the payload. Tensors round-trip bit-exactly, so a loaded model
reproduces the saved model's predictions exactly. Files are written to
a temp path and renamed, so readers never observe partial writes.

Datasets are JSONL with one row object per line, keys in feature-table
order followed by device_id, category_id, day_index. Floats are written
in shortest round-trip form and must be finite.
"""

import json
import os
import tempfile
from typing import Optional

import numpy as np

from .features import FeatureVector, LabeledDataset
from .harness import TrainedModel
from .neural import NeuralNet, Scaler, init_model
from .trees import DecisionTree, Forest

MAGIC = b"FLMC"
FORMAT_VERSION = 1

_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8"),
           "i4": np.dtype("<i4"), "i8": np.dtype("<i8")}


class StoreError(Exception):
    """Base class for persistence errors."""


class CorruptContainerError(StoreError):
    pass


class TruncatedPayloadError(StoreError):
    pass


class VersionMismatchError(StoreError):
    pass


class DatasetFormatError(StoreError):
    pass


# ---------------------------------------------------------------------------
# tensor manifests per member kind

def _dtype_code(arr) -> str:
    code = {"float32": "f4", "float64": "f8", "int32": "i4", "int64": "i8"}.get(arr.dtype.name)
    if code is None:
        raise StoreError(f"unsupported tensor dtype {arr.dtype}")
    return code


def _member_payload(member) -> tuple:
    """(member header dict, [(name, array), ...])"""
    if isinstance(member, NeuralNet):
        tensors = [(f"L{i}.{name}", p) for (i, name), p in member.tensors().items()]
        if member.scaler is not None:
            tensors += [("scaler.mean", member.scaler.mean), ("scaler.std", member.scaler.std)]
        head = {
            "kind": "neuralnet",
            "arch": member.arch,
            "head": member.head,
            "n_classes": member.n_classes,
            "seed": member.seed,
            "input_dim": member.input_dim,
            "dtype": member.dtype.name,
            "freeze_mask": list(member.freeze_mask),
            "has_scaler": member.scaler is not None,
        }
        return head, tensors
    if isinstance(member, DecisionTree):
        head = {"kind": "dtc", "n_features": member.n_features}
        tensors = [("feature", member.feature), ("threshold", member.threshold),
                   ("left", member.left), ("right", member.right), ("hist", member.hist)]
        return head, tensors
    if isinstance(member, Forest):
        heads, tensors = [], []
        for t, tree in enumerate(member.trees):
            th, tt = _member_payload(tree)
            heads.append(th)
            tensors += [(f"T{t}.{name}", arr) for name, arr in tt]
        return {"kind": "rfc", "n_features": member.n_features, "trees": heads}, tensors
    raise StoreError(f"cannot serialize member of type {type(member).__name__}")


def _rebuild_member(head: dict, tensors: dict):
    kind = head["kind"]
    if kind == "neuralnet":
        model = init_model(head["arch"], head["head"],
                           n_classes=head["n_classes"] if head["head"] == "multiclass" else None,
                           seed=head["seed"], dtype=np.dtype(head["dtype"]),
                           input_dim=head["input_dim"])
        for (i, name), param in model.tensors().items():
            stored = tensors[f"L{i}.{name}"]
            if stored.shape != param.shape:
                raise CorruptContainerError(f"tensor L{i}.{name} has shape {stored.shape}, "
                                            f"expected {param.shape}")
            param[...] = stored
        model.freeze_mask = [bool(b) for b in head["freeze_mask"]]
        if head["has_scaler"]:
            model.scaler = Scaler(mean=tensors["scaler.mean"], std=tensors["scaler.std"])
        return model
    if kind == "dtc":
        return DecisionTree(tensors["feature"], tensors["threshold"], tensors["left"],
                            tensors["right"], tensors["hist"], head["n_features"])
    if kind == "rfc":
        trees = []
        for t, th in enumerate(head["trees"]):
            sub = {name[len(f"T{t}."):]: arr for name, arr in tensors.items()
                   if name.startswith(f"T{t}.")}
            trees.append(_rebuild_member(th, sub))
        return Forest(trees, head["n_features"])
    raise CorruptContainerError(f"unknown member kind {kind!r}")


# ---------------------------------------------------------------------------
# model container

def save_model(bundle: TrainedModel, path) -> int:
    """Serialize a bundle; returns the payload size in bytes (the full
    container content, excluding any filesystem overhead)."""
    members = []
    blocks = []
    for member in bundle.members:
        head, tensors = _member_payload(member)
        manifest = []
        for name, arr in tensors:
            arr = np.ascontiguousarray(arr)
            code = _dtype_code(arr)
            manifest.append([name, code, list(arr.shape)])
            blocks.append(arr.astype(_DTYPES[code], copy=False).tobytes())
        head["manifest"] = manifest
        members.append(head)
    header = {
        "kind": "bundle",
        "model_type": bundle.model_type,
        "group": bundle.group,
        "classes": bundle.classes,
        "provenance": bundle.provenance,
        "members": members,
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode()
    payload = b"".join([MAGIC,
                        FORMAT_VERSION.to_bytes(4, "little"),
                        len(header_bytes).to_bytes(8, "little"),
                        header_bytes] + blocks)
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".",
                               prefix=".flmc-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(payload)


def model_size(path) -> int:
    """Payload bytes of a saved container."""
    return os.path.getsize(path)


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CorruptContainerError(f"{path}: not a model container")
    version = int.from_bytes(blob[4:8], "little")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: container version {version}, "
                                   f"reader supports {FORMAT_VERSION}")
    hlen = int.from_bytes(blob[8:16], "little")
    if 16 + hlen > len(blob):
        raise TruncatedPayloadError(f"{path}: header extends past end of file")
    try:
        header = json.loads(blob[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptContainerError(f"{path}: unreadable header: {exc}") from exc
    offset = 16 + hlen
    members = []
    for mhead in header["members"]:
        tensors = {}
        for name, code, shape in mhead["manifest"]:
            if code not in _DTYPES:
                raise CorruptContainerError(f"{path}: unknown dtype code {code!r}")
            dtype = _DTYPES[code]
            nbytes = int(np.prod(shape)) * dtype.itemsize if shape else dtype.itemsize
            if offset + nbytes > len(blob):
                raise TruncatedPayloadError(f"{path}: tensor {name} extends past end of file")
            tensors[name] = np.frombuffer(blob[offset:offset + nbytes], dtype=dtype).reshape(shape).copy()
            offset += nbytes
        members.append(_rebuild_member(mhead, tensors))
    return TrainedModel(model_type=header["model_type"], group=header["group"],
                        classes=list(header["classes"]), members=members,
                        provenance=dict(header["provenance"]))


def peek_kind(path) -> dict:
    """Read kind/version metadata without touching the payload."""
    with open(path, "rb") as fh:
        prefix = fh.read(16)
        if len(prefix) < 16 or prefix[:4] != MAGIC:
            raise CorruptContainerError(f"{path}: not a model container")
        version = int.from_bytes(prefix[4:8], "little")
        hlen = int.from_bytes(prefix[8:16], "little")
        header_bytes = fh.read(hlen)
    if len(header_bytes) < hlen:
        raise TruncatedPayloadError(f"{path}: header extends past end of file")
    header = json.loads(header_bytes.decode())
    return {"version": version, "kind": header["kind"],
            "model_type": header["model_type"], "group": header["group"]}


# ---------------------------------------------------------------------------
# datasets

def write_dataset(data: LabeledDataset, path) -> int:
    """Write rows as JSONL; returns the number of rows written.

    Non-finite feature values are rejected (the feature contract says
    vectors are always finite).
    """
    if not np.isfinite(data.features).all():
        bad = int(np.argwhere(~np.isfinite(data.features).all(axis=1))[0][0])
        raise DatasetFormatError(f"row {bad}: non-finite feature value")
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".",
                               prefix=".jsonl-")
    try:
        with os.fdopen(fd, "w") as fh:
            for row in data.rows():
                fh.write(json.dumps(row.as_dict(), separators=(",", ":"), allow_nan=False))
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(data)


def read_dataset(path, d_max: Optional[int] = None) -> LabeledDataset:
    """Read a JSONL dataset; errors name the offending line."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rows.append(FeatureVector.from_dict(obj))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from exc
    return LabeledDataset.from_rows(rows, d_max=d_max)
