"""Bit-exact file interchange: NPY arrays, PNG rasters, JSON manifests.

NPY support is deliberately restricted to version 1.0, C-order, and the
three dtypes this pipeline exchanges with external flow predictors
(little-endian float32, little-endian uint16, uint8). Flow stacks are
stored as [2, H, W] with dy first; probabilities as [H, W].
"""

import ast
import hashlib
import json
import struct
import warnings
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (ManifestError, NpyDtypeError, NpyMagicError,
                     NpyOrderError, NpyTruncatedError, NpyVersionError,
                     PngFormatError, ValidationError)

NPY_MAGIC = b"\x93NUMPY"
SUPPORTED_DESCR = {"<f4": np.float32, "<u2": np.uint16, "|u1": np.uint8}
_DESCR_FOR = {np.dtype(np.float32): "<f4",
              np.dtype(np.uint16): "<u2",
              np.dtype(np.uint8): "|u1"}

FLOW_MAG_TOL = 1e-3


# --- NPY ------------------------------------------------------------------

def write_npy(path, array):
    """Write a C-order array as NPY v1.0 with 64-byte header alignment."""
    array = np.ascontiguousarray(array)
    if array.dtype not in _DESCR_FOR:
        raise NpyDtypeError(f"unsupported dtype {array.dtype}")
    descr = _DESCR_FOR[array.dtype]
    header = ("{'descr': '%s', 'fortran_order': False, 'shape': %s, }"
              % (descr, repr(array.shape)))
    base = len(NPY_MAGIC) + 2 + 2   # magic + version + header-length field
    pad = (-(base + len(header) + 1)) % 64
    header = header + " " * pad + "\n"
    with open(path, "wb") as f:
        f.write(NPY_MAGIC)
        f.write(bytes([1, 0]))
        f.write(struct.pack("<H", len(header)))
        f.write(header.encode("latin1"))
        f.write(array.tobytes())


def read_npy(path):
    """Read an NPY v1.0 file; malformed files raise distinct errors."""
    data = Path(path).read_bytes()
    if len(data) < 10:
        raise NpyTruncatedError(f"{path}: file shorter than NPY preamble")
    if data[:6] != NPY_MAGIC:
        raise NpyMagicError(f"{path}: bad magic bytes {data[:6]!r}")
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise NpyVersionError(f"{path}: unsupported NPY version {major}.{minor}")
    (hlen,) = struct.unpack("<H", data[8:10])
    if len(data) < 10 + hlen:
        raise NpyTruncatedError(f"{path}: truncated header")
    try:
        header = ast.literal_eval(data[10:10 + hlen].decode("latin1"))
        descr = header["descr"]
        fortran = header["fortran_order"]
        shape = tuple(header["shape"])
    except Exception as exc:
        raise NpyTruncatedError(f"{path}: unparsable header") from exc
    if descr not in SUPPORTED_DESCR:
        raise NpyDtypeError(f"{path}: unsupported dtype descriptor {descr!r}")
    if fortran:
        raise NpyOrderError(f"{path}: fortran_order arrays are not supported")
    dtype = np.dtype(SUPPORTED_DESCR[descr])
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    payload = data[10 + hlen:]
    if len(payload) != count * dtype.itemsize:
        raise NpyTruncatedError(
            f"{path}: expected {count * dtype.itemsize} data bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def write_flows_npy(path, flow):
    flow = np.asarray(flow, np.float32)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ValidationError(f"flow stack must be [2, H, W], got {flow.shape}")
    write_npy(path, flow)


def read_flows_npy(path, strict=False):
    """Load a [2, H, W] flow stack, checking the unit-or-zero invariant.

    Magnitudes above 1 + 1e-3 are renormalized with a warning by
    default; under ``strict`` they are a hard error (real network flows
    are approximately, not exactly, unit).
    """
    flow = read_npy(path)
    if flow.ndim != 3 or flow.shape[0] != 2 or flow.dtype != np.float32:
        raise ValidationError(
            f"{path}: flow stack must be float32 [2, H, W], got "
            f"{flow.dtype} {flow.shape}")
    mag = np.sqrt(flow[0] ** 2 + flow[1] ** 2)
    over = mag > 1.0 + FLOW_MAG_TOL
    if over.any():
        if strict:
            raise ValidationError(
                f"{path}: {int(over.sum())} pixels exceed unit flow magnitude")
        warnings.warn(f"{path}: renormalizing {int(over.sum())} over-unit flow pixels")
        flow = flow.copy()
        flow[:, over] /= mag[over]
    return flow


def read_prob_npy(path):
    prob = read_npy(path)
    if prob.ndim != 2 or prob.dtype != np.float32:
        raise ValidationError(
            f"{path}: probability map must be float32 [H, W], got "
            f"{prob.dtype} {prob.shape}")
    if prob.min() < 0.0 or prob.max() > 1.0:
        raise ValidationError(f"{path}: probabilities must lie in [0, 1]")
    return prob


# --- PNG ------------------------------------------------------------------

def write_labels_png(path, labels):
    labels = np.ascontiguousarray(labels, np.uint16)
    h, w = labels.shape
    im = Image.frombytes("I;16", (w, h), labels.astype("<u2").tobytes())
    im.save(path, format="PNG")


def read_labels_png(path):
    im = Image.open(path)
    if im.format != "PNG":
        raise PngFormatError(f"{path}: not a PNG file")
    if im.mode not in ("I;16", "I"):
        raise PngFormatError(
            f"{path}: label maps must be 16-bit single-channel PNG, got mode {im.mode}")
    arr = np.asarray(im)
    if arr.max() > 65535 or arr.min() < 0:
        raise PngFormatError(f"{path}: label values out of uint16 range")
    return arr.astype(np.uint16)


def write_mask_png(path, mask):
    mask = (np.asarray(mask) > 0).astype(np.uint8) * 255
    Image.fromarray(mask, mode="L").save(path, format="PNG")


def read_mask_png(path):
    im = Image.open(path)
    if im.format != "PNG":
        raise PngFormatError(f"{path}: not a PNG file")
    if im.mode != "L":
        raise PngFormatError(
            f"{path}: masks must be 8-bit single-channel PNG, got mode {im.mode}")
    return (np.asarray(im) > 0).astype(np.uint8)


def write_image_png(path, image):
    """3-band [3, H, W] float image in [0,1] to an 8-bit RGB PNG."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValidationError(f"image must be [3, H, W], got {image.shape}")
    rgb = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(np.moveaxis(rgb, 0, -1), mode="RGB").save(path, format="PNG")


# --- manifest -------------------------------------------------------------

def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, files, scene_spec=None, settings=None):
    """JSON manifest with relative paths and content checksums."""
    path = Path(path)
    doc = {
        "files": {role: str(p) for role, p in files.items()},
        "checksums": {role: sha256_file(path.parent / p)
                      for role, p in files.items()},
    }
    if scene_spec is not None:
        doc["scene_spec"] = scene_spec
    if settings is not None:
        doc["settings"] = settings
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path):
    """Load a manifest, verifying that files exist and checksums match."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON") from exc
    for role, rel in doc.get("files", {}).items():
        target = path.parent / rel
        if not target.exists():
            raise ManifestError(f"{path}: missing file for {role!r}: {rel}")
        digest = sha256_file(target)
        expected = doc.get("checksums", {}).get(role)
        if expected is not None and digest != expected:
            raise ManifestError(f"{path}: checksum mismatch for {role!r}")
    return doc
