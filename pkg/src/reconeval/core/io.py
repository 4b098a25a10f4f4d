"""Point cloud (PLY / XYZ) and grayscale image (PGM / PNG) readers and writers."""

from __future__ import annotations

import logging
import os
import re
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import EmptyCloud, IoFailure, MalformedFile, UnsupportedBitDepth
from .types import GrayImage, PointCloud

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_INTENSITY_NAMES = ("intensity", "gray", "grey", "scalar_intensity")
_COLOR_NAMES = {"red", "green", "blue", "r", "g", "b", "alpha"}


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------

def load_pointcloud(path: PathLike) -> PointCloud:
    """Read a PLY (ASCII or binary little endian) or whitespace-separated XYZ file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not raw.strip():
        raise EmptyCloud(f"{path} is empty")
    if raw.startswith(b"ply"):
        cloud = _read_ply(raw, path)
    else:
        cloud = _read_xyz(raw, path)
    if len(cloud) == 0:
        raise EmptyCloud(f"{path} contains no vertices")
    return cloud


def save_pointcloud(cloud: PointCloud, path: PathLike, *, ascii: bool = False, precision: int = 6) -> None:
    """Write ``cloud`` as PLY (by default binary, doubles) or as XYZ text.

    Files with suffix ``.xyz`` or ``.txt`` are written as XYZ text; anything
    else is written as PLY.
    """
    path = Path(path)
    try:
        if path.suffix.lower() in (".xyz", ".txt"):
            _write_xyz(cloud, path, precision)
        elif ascii:
            _write_ply_ascii(cloud, path, precision)
        else:
            _write_ply_binary(cloud, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _parse_ply_header(raw: bytes, path: Path):
    end = raw.find(b"end_header")
    if end < 0:
        raise MalformedFile(f"{path}: PLY header is not terminated")
    nl = raw.find(b"\n", end)
    if nl < 0:
        raise MalformedFile(f"{path}: truncated PLY header")
    body_start = nl + 1
    lines = raw[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements: list[dict] = []
    for line in lines[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2:
                raise MalformedFile(f"{path}: bad format line")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise MalformedFile(f"{path}: bad element line {line!r}")
            elements.append({"name": tok[1], "count": int(tok[2]), "props": []})
        elif tok[0] == "property":
            if not elements:
                raise MalformedFile(f"{path}: property before element")
            if tok[1] == "list":
                if len(tok) != 5:
                    raise MalformedFile(f"{path}: bad list property {line!r}")
                elements[-1]["props"].append((tok[4], "list", tok[2], tok[3]))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                    raise MalformedFile(f"{path}: bad property {line!r}")
                elements[-1]["props"].append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise MalformedFile(f"{path}: unexpected header line {line!r}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise MalformedFile(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements, body_start


def _read_ply(raw: bytes, path: Path) -> PointCloud:
    fmt, elements, body_start = _parse_ply_header(raw, path)
    names = [e["name"] for e in elements]
    if "vertex" not in names:
        raise MalformedFile(f"{path}: no vertex element")
    vi = names.index("vertex")
    vertex = elements[vi]
    props = vertex["props"]
    if any(p[1] == "list" for p in props):
        raise MalformedFile(f"{path}: list properties on vertex are not supported")
    pnames = [p[0] for p in props]
    for axis in "xyz":
        if axis not in pnames:
            raise MalformedFile(f"{path}: vertex lacks property {axis!r}")
    n = vertex["count"]
    if n == 0:
        raise EmptyCloud(f"{path} has zero vertices")

    if fmt == "ascii":
        body = raw[body_start:].decode("ascii", errors="replace").split("\n")
        row = 0
        for e in elements[:vi]:
            row += e["count"]
        lines = [ln for ln in body[row:] if ln.strip()][:n]
        if len(lines) < n:
            raise MalformedFile(f"{path}: expected {n} vertices, found {len(lines)}")
        try:
            table = np.array([[float(t) for t in ln.split()[: len(props)]] for ln in lines])
        except ValueError as exc:
            raise MalformedFile(f"{path}: non-numeric token ({exc})") from exc
        if table.ndim != 2 or table.shape[1] != len(props):
            raise MalformedFile(f"{path}: vertex rows have too few values")
        columns = {name: table[:, i] for i, name in enumerate(pnames)}
        dtypes = {p[0]: np.dtype(p[1]) for p in props}
    else:
        offset = body_start
        for e in elements[:vi]:
            if any(p[1] == "list" for p in e["props"]):
                raise MalformedFile(f"{path}: list-valued element before vertex is not supported")
            offset += e["count"] * np.dtype([(p[0], "<" + p[1]) for p in e["props"]]).itemsize
        dt = np.dtype([(p[0], "<" + p[1]) for p in props])
        need = offset + n * dt.itemsize
        if len(raw) < need:
            raise MalformedFile(f"{path}: binary body truncated ({len(raw)} < {need} bytes)")
        rec = np.frombuffer(raw, dtype=dt, count=n, offset=offset)
        columns = {name: rec[name] for name in pnames}
        dtypes = {name: dt[name] for name in pnames}

    pts = np.column_stack([columns[a].astype(np.float64) for a in "xyz"])
    if not np.all(np.isfinite(pts)):
        raise MalformedFile(f"{path}: non-finite coordinates")
    if _COLOR_NAMES & set(pnames):
        logger.warning("%s: colour channels ignored", path)
    intensity = None
    for name in _INTENSITY_NAMES:
        if name in columns:
            intensity = _normalise_intensity(columns[name], dtypes[name])
            break
    return PointCloud(pts, intensity)


def _normalise_intensity(values: np.ndarray, dtype: np.dtype) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if np.issubdtype(dtype, np.integer):
        return np.clip(v / float(np.iinfo(dtype).max), 0.0, 1.0)
    return np.clip(v, 0.0, 1.0)


def _read_xyz(raw: bytes, path: Path) -> PointCloud:
    rows = []
    for lineno, line in enumerate(raw.decode("utf-8", errors="replace").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.replace(",", " ").split()
        if len(tok) < 3:
            raise MalformedFile(f"{path}:{lineno}: expected at least 3 values")
        try:
            rows.append([float(t) for t in tok[:4]])
        except ValueError as exc:
            raise MalformedFile(f"{path}:{lineno}: non-numeric token") from exc
    if not rows:
        raise EmptyCloud(f"{path} contains no points")
    widths = {len(r) for r in rows}
    pts = np.array([r[:3] for r in rows])
    if not np.all(np.isfinite(pts)):
        raise MalformedFile(f"{path}: non-finite coordinates")
    intensity = None
    if widths == {4}:
        intensity = np.clip(np.array([r[3] for r in rows]), 0.0, 1.0)
    return PointCloud(pts, intensity)


def _ply_header(cloud: PointCloud, fmt: str, coord_type: str) -> bytes:
    lines = [
        "ply",
        f"format {fmt} 1.0",
        f"element vertex {len(cloud)}",
        f"property {coord_type} x",
        f"property {coord_type} y",
        f"property {coord_type} z",
    ]
    if cloud.intensity is not None:
        lines.append(f"property {coord_type} intensity")
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def _write_ply_binary(cloud: PointCloud, path: Path) -> None:
    cols = [cloud.points]
    if cloud.intensity is not None:
        cols.append(cloud.intensity[:, None])
    body = np.ascontiguousarray(np.hstack(cols), dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_ply_header(cloud, "binary_little_endian", "double"))
        fh.write(body)


def _format_rows(cloud: PointCloud, precision: int) -> str:
    cols = [cloud.points]
    if cloud.intensity is not None:
        cols.append(cloud.intensity[:, None])
    table = np.hstack(cols)
    fmt = f"%.{precision}g"
    return "".join(" ".join(fmt % v for v in row) + "\n" for row in table)


def _write_ply_ascii(cloud: PointCloud, path: Path, precision: int) -> None:
    with open(path, "wb") as fh:
        fh.write(_ply_header(cloud, "ascii", "double"))
        fh.write(_format_rows(cloud, precision).encode("ascii"))


def _write_xyz(cloud: PointCloud, path: Path, precision: int) -> None:
    with open(path, "w") as fh:
        fh.write(_format_rows(cloud, precision))


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"(?:\s*(?:#[^\n]*\n)?)*\s*(\S+)")


def load_image(path: PathLike) -> GrayImage:
    """Load an 8-bit grayscale PGM (P2/P5) or PNG."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if raw[:2] in (b"P2", b"P5"):
        return _read_pgm(raw, path)
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(raw, path)
    raise MalformedFile(f"{path}: not a PGM or PNG file")


def save_image(image: GrayImage, path: PathLike) -> None:
    """Write ``image`` as PNG (``.png``) or binary PGM (anything else)."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".png":
            from PIL import Image

            Image.fromarray(np.asarray(image.data), mode="L").save(path, format="PNG")
        else:
            header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
            with open(path, "wb") as fh:
                fh.write(header + image.data.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_pgm(raw: bytes, path: Path) -> GrayImage:
    magic = raw[:2]
    pos = 2
    header = []
    for _ in range(3):
        m = _PGM_TOKEN.match(raw, pos)
        if m is None:
            raise MalformedFile(f"{path}: truncated PGM header")
        header.append(m.group(1))
        pos = m.end()
    try:
        width, height, maxval = (int(t) for t in header)
    except ValueError as exc:
        raise MalformedFile(f"{path}: non-numeric PGM header") from exc
    if width < 1 or height < 1 or maxval < 1:
        raise MalformedFile(f"{path}: invalid PGM dimensions")
    if maxval > 255:
        raise UnsupportedBitDepth(f"{path}: maxval {maxval} exceeds 8 bits")
    n = width * height
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        body = raw[pos: pos + n]
        if len(body) < n:
            raise MalformedFile(f"{path}: PGM pixel data truncated")
        data = np.frombuffer(body, dtype=np.uint8)
    else:
        tokens = raw[pos:].split()
        if len(tokens) < n:
            raise MalformedFile(f"{path}: PGM pixel data truncated")
        try:
            data = np.array([int(t) for t in tokens[:n]])
        except ValueError as exc:
            raise MalformedFile(f"{path}: non-numeric pixel value") from exc
        if data.min() < 0 or data.max() > maxval:
            raise MalformedFile(f"{path}: pixel value out of range")
    return GrayImage(data.astype(np.uint8).reshape(height, width))


def _read_png(raw: bytes, path: Path) -> GrayImage:
    # IHDR: width(4) height(4) bit depth(1) colour type(1) at fixed offsets
    if len(raw) < 33 or raw[12:16] != b"IHDR":
        raise MalformedFile(f"{path}: missing PNG IHDR chunk")
    bit_depth, colour_type = raw[24], raw[25]
    if bit_depth != 8:
        raise UnsupportedBitDepth(f"{path}: PNG bit depth {bit_depth}")
    if colour_type != 0:
        raise MalformedFile(f"{path}: PNG is not single-channel grayscale (colour type {colour_type})")
    import io as _io

    from PIL import Image

    try:
        with Image.open(_io.BytesIO(raw)) as im:
            im.load()
            data = np.array(im, dtype=np.uint8)
    except Exception as exc:  # Pillow raises a variety of types for corrupt data
        raise MalformedFile(f"{path}: {exc}") from exc
    return GrayImage(data)
