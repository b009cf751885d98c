"""
Byte-level codecs for probability maps (array container) and label masks (8-bit PNG)
"""
import io
import logging
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from taxoseg._util import PathLike
from taxoseg._util import atomic_write
from taxoseg.constants import ARRAY_ALIGN
from taxoseg.constants import ARRAY_MAGIC
from taxoseg.constants import ARRAY_VERSION
from taxoseg.constants import PROB_DTYPE
from taxoseg.exceptions import GridFormatError
from taxoseg.gridio.grids import LabelMask
from taxoseg.gridio.grids import ProbMap

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

# magic, two version bytes, little-endian uint16 header length
_PREAMBLE_LEN = len(ARRAY_MAGIC) + 2 + 2


def decode_float_grid(data: bytes) -> np.ndarray:
    """
    Decodes a version 1.0, C-order, 3-D ``<f4`` array container.
    """
    stream = io.BytesIO(data)
    try:
        version = np.lib.format.read_magic(stream)
    except ValueError as e:
        raise GridFormatError("Bad array magic: {}".format(e), e) from e
    if version != ARRAY_VERSION:
        raise GridFormatError("Unsupported array format version {}.{}".format(*version))
    try:
        shape, fortran_order, dtype = np.lib.format.read_array_header_1_0(stream)
    except ValueError as e:
        raise GridFormatError("Bad array header: {}".format(e), e) from e
    if dtype != np.dtype(PROB_DTYPE):
        raise GridFormatError("Expected dtype {}, got {}".format(PROB_DTYPE, dtype.str))
    if fortran_order:
        raise GridFormatError("Fortran-ordered arrays are not supported")
    if len(shape) != 3:
        raise GridFormatError("Expected 3 dimensions (H, W, C), got shape {}".format(shape))

    count = int(np.prod(shape, dtype=np.int64))
    expected = count * np.dtype(PROB_DTYPE).itemsize
    payload = data[stream.tell():]
    if len(payload) < expected:
        raise GridFormatError("Truncated payload: expected {} bytes, found {}".format(expected, len(payload)))
    if len(payload) > expected:
        raise GridFormatError("{} unexpected trailing bytes".format(len(payload) - expected))
    return np.frombuffer(payload, dtype=PROB_DTYPE, count=count).reshape(shape).astype(np.float32)


def encode_float_grid(array: np.ndarray) -> bytes:
    """
    Encodes a 3-D grid with the canonical header: fixed key order, no growth padding,
    spaces up to the 64-byte boundary and a closing newline.
    """
    grid = np.ascontiguousarray(array, dtype=PROB_DTYPE)
    if grid.ndim != 3:
        raise GridFormatError("Expected 3 dimensions (H, W, C), got shape {}".format(grid.shape))
    shape = tuple(int(d) for d in grid.shape)
    header = "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}".format(PROB_DTYPE, shape)
    header += ' ' * (-(_PREAMBLE_LEN + len(header) + 1) % ARRAY_ALIGN) + '\n'
    encoded = header.encode('latin1')
    return (
        ARRAY_MAGIC
        + bytes(ARRAY_VERSION)
        + struct.pack('<H', len(encoded))
        + encoded
        + grid.tobytes(order='C')
    )


def load_prob_map(data: bytes) -> ProbMap:
    return ProbMap(decode_float_grid(data))


def store_prob_map(prob_map: ProbMap) -> bytes:
    return encode_float_grid(prob_map.data)


def load_label_mask(data: bytes) -> LabelMask:
    """
    Decodes an 8-bit single-channel PNG. Palette images are read as raw indices.
    """
    try:
        with Image.open(io.BytesIO(data)) as image:
            image.load()
            mode = image.mode
            bands = len(image.getbands())
            pixels = np.array(image) if mode in ('L', 'P') else None
    except (OSError, SyntaxError, ValueError) as e:
        raise GridFormatError("Cannot decode label mask: {}".format(e), e) from e
    if bands > 1:
        raise GridFormatError("Label masks must be single-channel, got {} image".format(mode))
    if mode.startswith('I') or mode == 'F':
        raise GridFormatError("Label masks must be 8-bit, got {} image".format(mode))
    if pixels is None:
        raise GridFormatError("Unsupported label mask mode {}".format(mode))
    return LabelMask(pixels.astype(np.uint8, copy=False))


def store_label_mask(mask: LabelMask) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(mask.data, dtype=np.uint8)).save(buffer, format='PNG')
    return buffer.getvalue()


def read_prob_map(path: PathLike) -> ProbMap:
    try:
        return load_prob_map(Path(path).read_bytes())
    except GridFormatError as e:
        raise GridFormatError("{}: {}".format(path, e.msg), e) from e


def write_prob_map(path: PathLike, prob_map: ProbMap) -> None:
    atomic_write(path, store_prob_map(prob_map))
    log.debug("Wrote %r to %s", prob_map, path)


def read_label_mask(path: PathLike) -> LabelMask:
    try:
        return load_label_mask(Path(path).read_bytes())
    except GridFormatError as e:
        raise GridFormatError("{}: {}".format(path, e.msg), e) from e


def write_label_mask(path: PathLike, mask: LabelMask) -> None:
    atomic_write(path, store_label_mask(mask))
    log.debug("Wrote %r to %s", mask, path)
