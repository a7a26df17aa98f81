"""Colored point-cloud container plus PLY I/O, normalization, and downsampling.

The interchange format is PLY with per-vertex ``x y z`` floats and 8-bit
``red green blue`` channels. Both ASCII and binary-little-endian files are
read; writing always produces ASCII with fixed formatting so that identical
clouds yield byte-identical files. Mesh elements (faces) are skipped on
read: the whole pipeline operates on point sets only.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateCloudError,
    IoFailureError,
    MalformedHeaderError,
    MissingPropertyError,
    NonFiniteCoordinateError,
)

_PLY_DTYPES = {
    "char": "i1",
    "int8": "i1",
    "uchar": "u1",
    "uint8": "u1",
    "short": "i2",
    "int16": "i2",
    "ushort": "u2",
    "uint16": "u2",
    "int": "i4",
    "int32": "i4",
    "uint": "u4",
    "uint32": "u4",
    "float": "f4",
    "float32": "f4",
    "double": "f8",
    "float64": "f8",
}

_COORD_TYPES = {"float", "float32", "double", "float64"}
_COLOR_TYPES = {"uchar", "uint8"}


@dataclass(frozen=True)
class PointCloud:
    """Vertices with parallel per-vertex RGB colors.

    vertices: (N, 3) float64 coordinates, finite.
    colors:   (N, 3) float64, each channel in [0, 1].
    id:       opaque label, carried through transforms unchanged.

    Instances are immutable; the arrays are copied on construction and
    marked read-only, so clouds are safe to share across threads.
    """

    vertices: np.ndarray
    colors: np.ndarray
    id: str = ""

    def __post_init__(self) -> None:
        v = np.array(self.vertices, dtype=np.float64, copy=True)
        c = np.array(self.colors, dtype=np.float64, copy=True)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must have shape (N, 3), got {v.shape}")
        if c.shape != v.shape:
            raise ValueError(f"colors shape {c.shape} != vertices shape {v.shape}")
        if v.shape[0] < 1:
            raise ValueError("cloud must contain at least one vertex")
        if not np.all(np.isfinite(v)):
            raise NonFiniteCoordinateError(
                f"cloud {self.id!r} contains non-finite coordinates"
            )
        if not np.all((c >= 0.0) & (c <= 1.0)):
            raise ValueError("color channels must lie in [0, 1]")
        v.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "colors", c)

    def __len__(self) -> int:
        return self.vertices.shape[0]


@dataclass(frozen=True)
class NormalizationRecord:
    """Centroid/scale pair mapping a cloud to zero mean and unit RMS radius."""

    centroid: np.ndarray
    scale: float

    def __post_init__(self) -> None:
        c = np.array(self.centroid, dtype=np.float64, copy=True).reshape(3)
        if not np.all(np.isfinite(c)):
            raise ValueError("centroid must be finite")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "centroid", c)
        object.__setattr__(self, "scale", float(self.scale))


def normalize(cloud: PointCloud) -> tuple[PointCloud, NormalizationRecord]:
    """Center the cloud on its centroid and rescale so the RMS vertex norm is 1.

    Colors are untouched. Raises :class:`DegenerateCloudError` when every
    vertex coincides (the scale would be zero).
    """
    centroid = cloud.vertices.mean(axis=0)
    centered = cloud.vertices - centroid
    scale = float(np.sqrt(np.mean(np.sum(centered * centered, axis=1))))
    if scale == 0.0:
        raise DegenerateCloudError(f"cloud {cloud.id!r} has zero spatial extent")
    out = PointCloud(centered / scale, cloud.colors, cloud.id)
    return out, NormalizationRecord(centroid, scale)


def denormalize(cloud: PointCloud, record: NormalizationRecord) -> PointCloud:
    """Invert :func:`normalize`: scale back up and restore the centroid."""
    return PointCloud(
        cloud.vertices * record.scale + record.centroid, cloud.colors, cloud.id
    )


def downsample(cloud: PointCloud, target_count: int, seed: int) -> PointCloud:
    """Uniform random subsample without replacement, reproducible via seed.

    Returns the cloud unchanged when it already has at most ``target_count``
    vertices. Selected vertices keep their colors and their relative order.
    """
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    n = len(cloud)
    if target_count >= n:
        return cloud
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=target_count, replace=False))
    return PointCloud(cloud.vertices[idx], cloud.colors[idx], cloud.id)


def _parse_header(raw: bytes, path: Path):
    """Split a PLY byte blob into (format, elements, body bytes).

    elements is a list of (name, count, props) where props are
    (property_name, property_type) pairs; list properties are recorded as
    ("list", declaration_tokens) and only supported outside the vertex
    element.
    """
    if not raw.startswith(b"ply"):
        raise MalformedHeaderError(f"{path}: not a PLY file (missing 'ply' magic)")
    end = raw.find(b"end_header")
    if end < 0:
        raise MalformedHeaderError(f"{path}: missing end_header")
    nl = raw.find(b"\n", end)
    if nl < 0:
        raise MalformedHeaderError(f"{path}: truncated after end_header")
    header_text = raw[:end].decode("ascii", errors="replace")
    body = raw[nl + 1 :]

    fmt = None
    elements: list[tuple[str, int, list]] = []
    lines = [ln.strip() for ln in header_text.splitlines()]
    for ln in lines[1:]:
        if not ln:
            continue
        parts = ln.split()
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] not in ("ascii", "binary_little_endian"):
                raise MalformedHeaderError(f"{path}: unsupported format line {ln!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise MalformedHeaderError(f"{path}: bad element line {ln!r}")
            try:
                count = int(parts[2])
            except ValueError:
                raise MalformedHeaderError(f"{path}: bad element count in {ln!r}") from None
            elements.append((parts[1], count, []))
        elif parts[0] == "property":
            if not elements:
                raise MalformedHeaderError(f"{path}: property before any element")
            if parts[1] == "list":
                elements[-1][2].append(("list", tuple(parts[2:])))
            elif len(parts) == 3 and parts[1] in _PLY_DTYPES:
                elements[-1][2].append((parts[2], parts[1]))
            else:
                raise MalformedHeaderError(f"{path}: bad property line {ln!r}")
        elif parts[0] in ("comment", "obj_info"):
            continue
        else:
            raise MalformedHeaderError(f"{path}: unrecognized header line {ln!r}")
    if fmt is None:
        raise MalformedHeaderError(f"{path}: missing format line")
    return fmt, elements, body


def _check_vertex_props(props, path: Path) -> list[str]:
    names = []
    for name, ptype in props:
        if name == "list":
            raise MalformedHeaderError(f"{path}: list property in vertex element")
        names.append(name)
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise MissingPropertyError(f"{path}: vertex element has no {axis!r} property")
    for channel in ("red", "green", "blue"):
        if channel not in names:
            raise MissingPropertyError(
                f"{path}: vertex element has no color channels (red/green/blue)"
            )
    types = dict(props)
    for axis in ("x", "y", "z"):
        if types[axis] not in _COORD_TYPES:
            raise MalformedHeaderError(
                f"{path}: coordinate property {axis!r} must be float or double"
            )
    for channel in ("red", "green", "blue"):
        if types[channel] not in _COLOR_TYPES:
            raise MalformedHeaderError(
                f"{path}: color property {channel!r} must be 8-bit (uchar)"
            )
    return names


def _read_ascii_vertices(body: bytes, elements, path: Path) -> np.ndarray:
    lines = body.decode("ascii", errors="replace").splitlines()
    cursor = 0
    for name, count, props in elements:
        if name == "vertex":
            names = _check_vertex_props(props, path)
            rows = lines[cursor : cursor + count]
            if len(rows) < count:
                raise MalformedHeaderError(
                    f"{path}: expected {count} vertex rows, found {len(rows)}"
                )
            try:
                data = np.loadtxt(io.StringIO("\n".join(rows)), dtype=np.float64, ndmin=2)
            except ValueError as exc:
                raise MalformedHeaderError(f"{path}: unparseable vertex row ({exc})") from exc
            if data.shape[1] != len(props):
                raise MalformedHeaderError(
                    f"{path}: vertex rows have {data.shape[1]} columns, "
                    f"header declares {len(props)} properties"
                )
            cols = {nm: data[:, i] for i, nm in enumerate(names)}
            return _assemble(cols, path)
        cursor += count
    raise MalformedHeaderError(f"{path}: no vertex element")


def _read_binary_vertices(body: bytes, elements, path: Path) -> np.ndarray:
    offset = 0
    for name, count, props in elements:
        if name == "vertex":
            names = _check_vertex_props(props, path)
            vdtype = np.dtype([(nm, "<" + _PLY_DTYPES[pt]) for nm, pt in props])
            try:
                data = np.frombuffer(body, dtype=vdtype, count=count, offset=offset)
            except ValueError as exc:
                raise MalformedHeaderError(f"{path}: vertex data truncated ({exc})") from exc
            cols = {nm: data[nm].astype(np.float64) for nm in names}
            return _assemble(cols, path)
        for pname, _ in props:
            if pname == "list":
                raise MalformedHeaderError(
                    f"{path}: cannot skip list-typed element {name!r} before vertices"
                )
        offset += count * np.dtype([(nm, "<" + _PLY_DTYPES[pt]) for nm, pt in props]).itemsize
    raise MalformedHeaderError(f"{path}: no vertex element")


def _assemble(cols: dict, path: Path) -> tuple[np.ndarray, np.ndarray]:
    verts = np.column_stack([cols["x"], cols["y"], cols["z"]])
    rgb = np.column_stack([cols["red"], cols["green"], cols["blue"]])
    if not np.all(np.isfinite(verts)):
        raise NonFiniteCoordinateError(f"{path}: non-finite vertex coordinate")
    if rgb.min() < 0.0 or rgb.max() > 255.0:
        raise MalformedHeaderError(f"{path}: color value outside the 8-bit range")
    return verts, rgb / 255.0


def load_ply(path) -> PointCloud:
    """Read a colored point cloud from an ASCII or binary-little-endian PLY.

    Vertex order is preserved exactly as stored; colors are rescaled from
    [0, 255] to [0, 1]. The cloud id is the file stem. Non-vertex elements
    (faces etc.) are ignored.
    """
    path = Path(path)
    raw = path.read_bytes()
    fmt, elements, body = _parse_header(raw, path)
    for name, count, _ in elements:
        if name == "vertex" and count < 1:
            raise MalformedHeaderError(f"{path}: vertex count must be >= 1")
    if fmt == "ascii":
        verts, colors = _read_ascii_vertices(body, elements, path)
    else:
        verts, colors = _read_binary_vertices(body, elements, path)
    return PointCloud(verts, colors, path.stem)


def save_ply(cloud: PointCloud, path) -> None:
    """Write an ASCII PLY with colors quantized round-to-nearest to 8 bits.

    Output bytes are a pure function of the cloud, so saving the same cloud
    twice yields byte-identical files. Coordinates keep 8 decimal places,
    comfortably below any geometric tolerance in the pipeline.
    """
    quant = np.clip(np.rint(cloud.colors * 255.0), 0, 255).astype(np.int64)
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    rows = [
        f"{v[0]:.8f} {v[1]:.8f} {v[2]:.8f} {c[0]} {c[1]} {c[2]}"
        for v, c in zip(cloud.vertices.tolist(), quant.tolist())
    ]
    payload = ("\n".join(header + rows) + "\n").encode("ascii")
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
