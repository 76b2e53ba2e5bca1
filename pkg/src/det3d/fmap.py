"""Binary tensor dump format for feature maps, and on-disk map bundles.

Layout (little-endian):
  magic   4 bytes  b"FMAP"
  version u32      1
  height  u32
  width   u32
  channels u32
  role    u8       0=heatmap 1=embedding 2=offset 3=generic
  payload H*W*C float32, row-major (row, col, channel)
"""

import os
import struct

import numpy as np

from .core import (
    ALL_KINDS,
    CORNER_KINDS,
    Det3DError,
    FeatureMap,
    MapBundle,
    MapRole,
    ParseError,
)
from .ioutil import atomic_write_bytes

__all__ = [
    "MAGIC",
    "VERSION",
    "dump_fmap",
    "parse_fmap",
    "save_fmap",
    "load_fmap",
    "bundle_filenames",
    "save_bundle",
    "load_bundle",
]

MAGIC = b"FMAP"
VERSION = 1

_HEADER = struct.Struct("<4sIIIIB")
_PAYLOAD_OFFSET = _HEADER.size  # 21 bytes

# Header field offsets, used in parse errors.
_OFF_MAGIC = 0
_OFF_VERSION = 4
_OFF_HEIGHT = 8
_OFF_WIDTH = 12
_OFF_CHANNELS = 16
_OFF_ROLE = 20


def dump_fmap(fmap):
    """Serialize a feature map to bytes."""
    header = _HEADER.pack(
        MAGIC, VERSION, fmap.height, fmap.width, fmap.channels, int(fmap.role)
    )
    payload = np.ascontiguousarray(fmap.data, dtype="<f4").tobytes()
    return header + payload


def parse_fmap(blob):
    """Parse bytes produced by :func:`dump_fmap` back into a feature map."""
    if len(blob) < _PAYLOAD_OFFSET:
        raise ParseError(
            f"truncated header: need {_PAYLOAD_OFFSET} bytes, got {len(blob)}",
            offset=len(blob),
        )
    magic, version, height, width, channels, role = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=_OFF_MAGIC)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", offset=_OFF_VERSION)
    if height < 1:
        raise ParseError(f"height must be >= 1, got {height}", offset=_OFF_HEIGHT)
    if width < 1:
        raise ParseError(f"width must be >= 1, got {width}", offset=_OFF_WIDTH)
    if channels < 1:
        raise ParseError(f"channels must be >= 1, got {channels}", offset=_OFF_CHANNELS)
    try:
        role = MapRole(role)
    except ValueError:
        raise ParseError(f"unknown role tag {role}", offset=_OFF_ROLE) from None

    expected = height * width * channels * 4
    actual = len(blob) - _PAYLOAD_OFFSET
    if actual != expected:
        raise ParseError(
            f"payload holds {actual} bytes, expected {expected} "
            f"for a {height}x{width}x{channels} map",
            offset=_PAYLOAD_OFFSET,
        )
    values = np.frombuffer(blob, dtype="<f4", offset=_PAYLOAD_OFFSET)
    try:
        return FeatureMap(values.reshape(height, width, channels), role=role)
    except Det3DError as exc:
        raise ParseError(f"invalid payload: {exc}", offset=_PAYLOAD_OFFSET) from exc


def save_fmap(path, fmap):
    atomic_write_bytes(path, dump_fmap(fmap))


def load_fmap(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise ParseError(f"missing tensor dump {os.fspath(path)!r}") from None
    try:
        return parse_fmap(blob)
    except ParseError as exc:
        raise ParseError(
            f"{os.fspath(path)}: {exc.args[0]}",
            offset=exc.offset,
        ) from None


def bundle_filenames(include_aux=True):
    """Canonical file names for a per-frame bundle directory."""
    names = {}
    for kind in ALL_KINDS:
        names[("heatmap", kind)] = f"heatmap_{kind.value}.fmap"
        names[("offset", kind)] = f"offset_{kind.value}.fmap"
    for kind in CORNER_KINDS:
        names[("embedding", kind)] = f"embedding_{kind.value}.fmap"
    if include_aux:
        names[("aux", "depth")] = "aux_depth.fmap"
        names[("aux", "dims")] = "aux_dims.fmap"
        names[("aux", "orientation")] = "aux_orientation.fmap"
    return names


def save_bundle(directory, bundle):
    """Write every map of a bundle into a directory with canonical names."""
    os.makedirs(directory, exist_ok=True)
    names = bundle_filenames(include_aux=False)
    for kind in ALL_KINDS:
        save_fmap(os.path.join(directory, names[("heatmap", kind)]), bundle.heatmaps[kind])
        save_fmap(os.path.join(directory, names[("offset", kind)]), bundle.offsets[kind])
    for kind in CORNER_KINDS:
        save_fmap(
            os.path.join(directory, names[("embedding", kind)]), bundle.embeddings[kind]
        )
    aux = (
        ("aux_depth.fmap", bundle.aux_depth),
        ("aux_dims.fmap", bundle.aux_dims),
        ("aux_orientation.fmap", bundle.aux_orientation),
    )
    for name, fmap in aux:
        if fmap is not None:
            save_fmap(os.path.join(directory, name), fmap)


def load_bundle(directory):
    """Load a bundle saved by :func:`save_bundle`; aux maps are optional."""
    names = bundle_filenames(include_aux=False)
    heatmaps = {}
    offsets = {}
    embeddings = {}
    for kind in ALL_KINDS:
        heatmaps[kind] = load_fmap(os.path.join(directory, names[("heatmap", kind)]))
        offsets[kind] = load_fmap(os.path.join(directory, names[("offset", kind)]))
    for kind in CORNER_KINDS:
        embeddings[kind] = load_fmap(os.path.join(directory, names[("embedding", kind)]))

    def load_optional(name):
        path = os.path.join(directory, name)
        return load_fmap(path) if os.path.exists(path) else None

    return MapBundle(
        heatmaps=heatmaps,
        embeddings=embeddings,
        offsets=offsets,
        aux_depth=load_optional("aux_depth.fmap"),
        aux_dims=load_optional("aux_dims.fmap"),
        aux_orientation=load_optional("aux_orientation.fmap"),
    )
