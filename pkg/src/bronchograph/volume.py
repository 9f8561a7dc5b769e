"""Volume container and file I/O.

Two on-disk formats are supported, both little-endian with x-fastest
voxel ordering (linear index = x + nx*(y + ny*z)):

* raw payload + JSON sidecar (``<path>`` + ``<path>.json``), sidecar schema
  ``{"dims": [nx,ny,nz], "spacing": [sx,sy,sz], "kind": "binary"|"labels"}``
* detached-data NRRD subset: ``dimension: 3``, ``encoding: raw``, diagonal
  ``space directions``, ``data file`` pointing at the payload.

Binary masks are stored as uint8, label volumes as uint16.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DimsMismatch, IoFailure, MalformedHeader, UnsupportedEncoding

BINARY = "binary"
LABELS = "labels"

_DTYPES = {BINARY: np.dtype("<u1"), LABELS: np.dtype("<u2")}


@dataclass
class Volume:
    """3D voxel grid with physical spacing.

    data has shape (nx, ny, nz) and is indexed data[x, y, z]; spacing is
    mm per voxel along each axis.
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    kind: str = BINARY

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.spacing = tuple(float(s) for s in self.spacing)
        self.validate()

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def validate(self) -> None:
        if self.data.ndim != 3 or 0 in self.data.shape:
            raise ValueError(f"expected non-empty 3D data, got shape {self.data.shape}")
        if len(self.spacing) != 3 or any(
            not np.isfinite(s) or s <= 0 for s in self.spacing
        ):
            raise ValueError(f"spacing must be positive and finite, got {self.spacing}")
        if self.kind not in _DTYPES:
            raise ValueError(f"kind must be 'binary' or 'labels', got {self.kind!r}")
        if self.kind == BINARY:
            if not np.isin(self.data, (0, 1)).all():
                raise ValueError("binary volume contains values outside {0, 1}")
        else:
            if not np.issubdtype(self.data.dtype, np.integer) or self.data.min() < 0:
                raise ValueError("labels volume must hold nonnegative integers")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Volume)
            and self.kind == other.kind
            and self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )

    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.data))


def _sidecar_path(path: str) -> tuple[str, str]:
    """Return (payload path, sidecar path) for a rawjson volume."""
    if path.endswith(".json"):
        return path[: -len(".json")], path
    return path, path + ".json"


def _detect_format(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    return "nrrd" if ext in (".nrrd", ".nhdr") else "rawjson"


def _decode_payload(raw: bytes, dims, kind: str) -> np.ndarray:
    dtype = _DTYPES[kind]
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(raw) != expected:
        raise DimsMismatch(
            f"payload is {len(raw)} bytes, header declares {expected}"
        )
    flat = np.frombuffer(raw, dtype=dtype)
    return flat.reshape(tuple(dims), order="F").copy()


def load_volume(path: str, format: str | None = None) -> Volume:
    """Load a volume; format defaults to extension-based detection."""
    fmt = format or _detect_format(path)
    if fmt == "rawjson":
        return _load_rawjson(path)
    if fmt == "nrrd":
        return _load_nrrd(path)
    raise ValueError(f"unknown format {fmt!r}")


def save_volume(v: Volume, path: str, format: str | None = None) -> None:
    """Save a volume so that load_volume(path) returns it bitwise-equal."""
    v.validate()
    fmt = format or _detect_format(path)
    if fmt == "rawjson":
        _save_rawjson(v, path)
    elif fmt == "nrrd":
        _save_nrrd(v, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _load_rawjson(path: str) -> Volume:
    payload_path, sidecar_path = _sidecar_path(path)
    try:
        with open(sidecar_path) as fh:
            header = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read sidecar {sidecar_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"sidecar {sidecar_path} is not valid JSON: {exc}") from exc

    for key in ("dims", "spacing", "kind"):
        if key not in header:
            raise MalformedHeader(f"sidecar missing {key!r}")
    dims = header["dims"]
    if len(dims) != 3 or any(int(d) <= 0 for d in dims):
        raise MalformedHeader(f"dims must be 3 positive integers, got {dims}")
    if header["kind"] not in _DTYPES:
        raise MalformedHeader(f"kind must be 'binary' or 'labels', got {header['kind']!r}")

    try:
        with open(payload_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read payload {payload_path}: {exc}") from exc
    data = _decode_payload(raw, [int(d) for d in dims], header["kind"])
    return Volume(data, tuple(float(s) for s in header["spacing"]), header["kind"])


def _save_rawjson(v: Volume, path: str) -> None:
    payload_path, sidecar_path = _sidecar_path(path)
    header = {
        "dims": list(v.dims),
        "spacing": list(v.spacing),
        "kind": v.kind,
    }
    try:
        with open(payload_path, "wb") as fh:
            fh.write(np.asfortranarray(v.data.astype(_DTYPES[v.kind])).tobytes(order="F"))
        with open(sidecar_path, "w") as fh:
            json.dump(header, fh)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


_NRRD_TYPES = {"uint8": BINARY, "uchar": BINARY, "uint16": LABELS, "ushort": LABELS}


def _parse_nrrd_vector(text: str) -> list[float]:
    return [float(x) for x in text.strip("() ").split(",")]


def _load_nrrd(path: str) -> Volume:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read header {path}: {exc}") from exc
    if not lines or not lines[0].startswith("NRRD"):
        raise MalformedHeader(f"{path}: missing NRRD magic")

    fields = {}
    for line in lines[1:]:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise MalformedHeader(f"{path}: unparseable line {line!r}")
        key, value = line.split(":", 1)
        fields[key.strip().lower()] = value.strip()

    for key in ("type", "dimension", "sizes", "encoding", "space directions", "data file"):
        if key not in fields:
            raise MalformedHeader(f"{path}: missing field {key!r}")
    if fields["dimension"] != "3":
        raise UnsupportedEncoding(f"only 3D NRRD supported, got dimension {fields['dimension']}")
    if fields["encoding"] != "raw":
        raise UnsupportedEncoding(f"only raw encoding supported, got {fields['encoding']!r}")
    if fields.get("endian", "little") != "little":
        raise UnsupportedEncoding("only little-endian NRRD supported")
    if fields["type"] not in _NRRD_TYPES:
        raise UnsupportedEncoding(f"unsupported type {fields['type']!r}")
    kind = _NRRD_TYPES[fields["type"]]

    dims = [int(x) for x in fields["sizes"].split()]
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise MalformedHeader(f"sizes must be 3 positive integers, got {fields['sizes']!r}")

    vectors = [v for v in fields["space directions"].split(") ")]
    vectors = [_parse_nrrd_vector(v) for v in vectors]
    if len(vectors) != 3 or any(len(v) != 3 for v in vectors):
        raise MalformedHeader(f"space directions must hold 3 vectors, got {fields['space directions']!r}")
    spacing = []
    for axis, vec in enumerate(vectors):
        off_diag = [vec[j] for j in range(3) if j != axis]
        if any(x != 0 for x in off_diag) or vec[axis] <= 0:
            raise UnsupportedEncoding(
                f"space directions must be positive diagonal, got {fields['space directions']!r}"
            )
        spacing.append(vec[axis])

    data_path = os.path.join(os.path.dirname(path) or ".", fields["data file"])
    try:
        with open(data_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read data file {data_path}: {exc}") from exc
    data = _decode_payload(raw, dims, kind)
    return Volume(data, tuple(spacing), kind)


def _save_nrrd(v: Volume, path: str) -> None:
    stem = os.path.splitext(path)[0]
    data_path = stem + ".raw"
    dtype_name = "uint8" if v.kind == BINARY else "uint16"
    sx, sy, sz = v.spacing
    header = "\n".join(
        [
            "NRRD0004",
            f"type: {dtype_name}",
            "dimension: 3",
            "sizes: {} {} {}".format(*v.dims),
            "encoding: raw",
            "endian: little",
            f"space directions: ({sx},0,0) (0,{sy},0) (0,0,{sz})",
            f"data file: {os.path.basename(data_path)}",
            "",
        ]
    )
    try:
        with open(path, "w") as fh:
            fh.write(header)
        with open(data_path, "wb") as fh:
            fh.write(np.asfortranarray(v.data.astype(_DTYPES[v.kind])).tobytes(order="F"))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
