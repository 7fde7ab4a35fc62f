"""Reading and writing binary masks stored as NIfTI-1 volumes.

Only the header fields needed for mask evaluation are interpreted:
dimensions, voxel spacing, datatype, data offset and (optionally) the
sform orientation rows.  Both single-file volumes (magic ``n+1``) and
header/image pairs (magic ``ni1``) are supported, gzipped or plain.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER_SIZE = 348

# NIfTI-1 datatype codes we accept for mask payloads.
_DTYPES = {
    2: "u1",
    4: "i2",
    8: "i4",
    16: "f4",
    64: "f8",
    256: "i1",
    512: "u2",
    768: "u4",
    1024: "i8",
    1280: "u8",
}


class NiftiParseError(ValueError):
    """Base class for failures while decoding a NIfTI-1 file."""


class MalformedHeaderError(NiftiParseError):
    """A header field holds a value the format does not allow."""


class UnsupportedDatatypeError(NiftiParseError):
    """The file uses a datatype this toolkit does not read."""


class TruncatedPayloadError(NiftiParseError):
    """The voxel payload is shorter than the header promises."""


class GeometryMismatchError(ValueError):
    """Two volumes that must share a grid do not."""


@dataclass(frozen=True)
class VolumeHeader:
    """Spatial metadata of a loaded volume."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    datatype_code: int
    affine: np.ndarray | None = field(default=None, compare=False)

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz


@dataclass(frozen=True)
class MaskVolume:
    """A binary mask plus the header it was read with."""

    header: VolumeHeader
    voxels: np.ndarray  # uint8, shape == header.dims

    @property
    def positive_voxels(self) -> int:
        return int(np.count_nonzero(self.voxels))

    @property
    def positive_fraction(self) -> float:
        return self.positive_voxels / self.header.voxel_count


def voxel_volume_ml(header: VolumeHeader) -> float:
    """Volume of one voxel in millilitres (1 mL == 1000 mm^3)."""
    return header.voxel_volume_mm3 / 1000.0


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def _byte_order(buf: bytes) -> str:
    (sizeof_hdr,) = struct.unpack_from("<i", buf, 0)
    if sizeof_hdr == HEADER_SIZE:
        return "<"
    (sizeof_hdr,) = struct.unpack_from(">i", buf, 0)
    if sizeof_hdr == HEADER_SIZE:
        return ">"
    raise MalformedHeaderError(
        f"sizeof_hdr: expected 348 in either byte order, got {sizeof_hdr}"
    )


def _parse_header(buf: bytes) -> tuple[VolumeHeader, str, int, np.dtype]:
    """Decode the fixed 348-byte header.

    Returns the header, the struct byte-order prefix, the payload offset
    and the numpy dtype of the stored voxels.
    """
    if len(buf) < HEADER_SIZE:
        raise MalformedHeaderError(
            f"header: file holds {len(buf)} bytes, need at least {HEADER_SIZE}"
        )
    bo = _byte_order(buf)

    magic = struct.unpack_from("4s", buf, 344)[0]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise MalformedHeaderError(f"magic: expected n+1 or ni1, got {magic!r}")

    dim = struct.unpack_from(bo + "8h", buf, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise MalformedHeaderError(f"dim[0]: expected 1..7, got {ndim}")
    shape = [max(d, 1) for d in dim[1 : ndim + 1]]
    if any(d < 1 for d in dim[1 : min(ndim, 3) + 1]):
        raise MalformedHeaderError(f"dim: non-positive spatial extent in {dim[1:4]}")
    if int(np.prod(shape[3:], dtype=np.int64)) > 1:
        raise MalformedHeaderError(
            f"dim: volume has {ndim} non-trivial dimensions, expected a 3-D mask"
        )
    while len(shape) < 3:
        shape.append(1)
    dims = (shape[0], shape[1], shape[2])

    (datatype,) = struct.unpack_from(bo + "h", buf, 70)
    if datatype not in _DTYPES:
        raise UnsupportedDatatypeError(f"datatype: code {datatype} is not supported")
    dtype = np.dtype(bo + _DTYPES[datatype])

    (bitpix,) = struct.unpack_from(bo + "h", buf, 72)
    if bitpix != dtype.itemsize * 8:
        raise MalformedHeaderError(
            f"bitpix: {bitpix} does not match datatype {datatype} "
            f"({dtype.itemsize * 8} bits)"
        )

    pixdim = struct.unpack_from(bo + "8f", buf, 76)
    spacing = pixdim[1:4]
    if any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise MalformedHeaderError(
            f"pixdim: spatial spacing must be finite and positive, got {spacing}"
        )

    (vox_offset,) = struct.unpack_from(bo + "f", buf, 108)
    offset = int(vox_offset)
    if magic == b"n+1\x00" and offset < HEADER_SIZE:
        raise MalformedHeaderError(
            f"vox_offset: {offset} overlaps the header of a single-file volume"
        )

    (sform_code,) = struct.unpack_from(bo + "h", buf, 254)
    affine = None
    if sform_code > 0:
        rows = [struct.unpack_from(bo + "4f", buf, 280 + 16 * i) for i in range(3)]
        affine = np.array(rows, dtype=np.float64)

    header = VolumeHeader(
        dims=dims,
        spacing=(float(spacing[0]), float(spacing[1]), float(spacing[2])),
        datatype_code=int(datatype),
        affine=affine,
    )
    return header, bo, offset, dtype


def _paired_image_path(path: Path) -> Path:
    """Locate the .img payload next to a ni1-style header file."""
    name = path.name
    if name.endswith(".gz"):
        name = name[: -len(".gz")]
    stem = name.rsplit(".", 1)[0] if "." in name else name
    for suffix in (".img", ".img.gz"):
        candidate = path.with_name(stem + suffix)
        if candidate.exists():
            return candidate
    raise TruncatedPayloadError(
        f"payload: no .img file found next to header {path.name}"
    )


def load_mask(path: str | Path, threshold: float = 0.5) -> MaskVolume:
    """Load a volume and binarise it with ``voxel > threshold``."""
    path = Path(path)
    buf = _read_bytes(path)
    header, _, offset, dtype = _parse_header(buf)

    magic = struct.unpack_from("4s", buf, 344)[0]
    if magic == b"ni1\x00":
        payload = _read_bytes(_paired_image_path(path))[offset:]
    else:
        payload = buf[offset:]

    nbytes = header.voxel_count * dtype.itemsize
    if len(payload) < nbytes:
        raise TruncatedPayloadError(
            f"payload: need {nbytes} bytes for dims {header.dims}, got {len(payload)}"
        )
    data = np.frombuffer(payload[:nbytes], dtype=dtype)
    # NIfTI stores x fastest; numpy sees that as Fortran order.
    grid = data.reshape(header.dims, order="F")
    voxels = np.ascontiguousarray((grid > threshold).astype(np.uint8))
    return MaskVolume(header=header, voxels=voxels)


def validate_pair(gt: MaskVolume, pred: MaskVolume) -> list[str]:
    """Check that two masks share a grid; return non-fatal warnings.

    Dimension or spacing disagreement raises GeometryMismatchError.
    Orientation differences only produce a warning because binary
    overlap metrics are computed on the raw voxel grid.
    """
    if gt.header.dims != pred.header.dims:
        raise GeometryMismatchError(
            f"dims: ground truth {gt.header.dims} vs prediction {pred.header.dims}"
        )
    if not np.allclose(gt.header.spacing, pred.header.spacing, rtol=1e-4, atol=0.0):
        raise GeometryMismatchError(
            f"spacing: ground truth {gt.header.spacing} "
            f"vs prediction {pred.header.spacing}"
        )
    warnings: list[str] = []
    a, b = gt.header.affine, pred.header.affine
    if (a is None) != (b is None):
        warnings.append("orientation: only one volume carries an sform matrix")
    elif a is not None and b is not None and not np.allclose(a, b, atol=1e-4):
        warnings.append("orientation: sform matrices disagree; comparing voxel grids")
    return warnings


def _pack_header(header: VolumeHeader, datatype: int, bitpix: int) -> bytearray:
    buf = bytearray(HEADER_SIZE)
    struct.pack_into("<i", buf, 0, HEADER_SIZE)
    struct.pack_into("<8h", buf, 40, 3, *header.dims, 1, 1, 1, 1)
    struct.pack_into("<h", buf, 70, datatype)
    struct.pack_into("<h", buf, 72, bitpix)
    struct.pack_into("<8f", buf, 76, 1.0, *header.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", buf, 108, float(HEADER_SIZE + 4))
    struct.pack_into("<b", buf, 123, 2)  # xyzt_units: millimetres
    if header.affine is not None:
        struct.pack_into("<h", buf, 254, 1)
        for i in range(3):
            struct.pack_into("<4f", buf, 280 + 16 * i, *header.affine[i])
    struct.pack_into("4s", buf, 344, b"n+1\x00")
    return buf


def _write_volume(path: Path, header: VolumeHeader, data: np.ndarray, code: int) -> None:
    dtype = np.dtype("<" + _DTYPES[code])
    buf = _pack_header(header, code, dtype.itemsize * 8)
    buf += b"\x00\x00\x00\x00"  # empty extender
    buf += np.asfortranarray(data.astype(dtype)).tobytes(order="F")
    path = Path(path)
    if path.suffix == ".gz":
        # mtime and filename pinned so identical volumes give identical bytes.
        with open(path, "wb") as fh:
            with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(bytes(buf))
    else:
        path.write_bytes(bytes(buf))


def save_mask(mask: MaskVolume, path: str | Path) -> None:
    """Write a binary mask as single-file NIfTI-1 (uint8)."""
    _write_volume(Path(path), mask.header, mask.voxels, 2)


def save_labels(header: VolumeHeader, labels: np.ndarray, path: str | Path) -> None:
    """Write an int32 label field on the same grid as ``header``."""
    if tuple(labels.shape) != header.dims:
        raise GeometryMismatchError(
            f"dims: labels {tuple(labels.shape)} vs header {header.dims}"
        )
    _write_volume(Path(path), header, labels, 8)
