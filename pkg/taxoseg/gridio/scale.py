"""
Ground sample distance normalization
"""
import logging
import math
from typing import Tuple
from typing import overload
from typing import Union

import numpy as np
from scipy import ndimage

from taxoseg.exceptions import ScaleError
from taxoseg.gridio.grids import GsdSpec
from taxoseg.gridio.grids import LabelMask
from taxoseg.gridio.grids import ProbMap

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())


def scaled_length(length: int, spec: GsdSpec) -> int:
    """
    Pixel count covering the same ground distance at the target GSD, rounded half up.
    """
    return int(math.floor(length * spec.source_gsd / spec.target_gsd + 0.5))


def scaled_shape(height: int, width: int, spec: GsdSpec) -> Tuple[int, int]:
    out_height, out_width = scaled_length(height, spec), scaled_length(width, spec)
    if out_height == 0 or out_width == 0:
        raise ScaleError("Rescaling {}x{} by {:.6f} leaves an empty grid".format(height, width, spec.scale))
    return out_height, out_width


def _zoom(array: np.ndarray, shape: Tuple[int, int], order: int) -> np.ndarray:
    factors = [shape[0] / array.shape[0], shape[1] / array.shape[1]] + [1.0] * (array.ndim - 2)
    return ndimage.zoom(array, factors, order=order, mode='nearest', grid_mode=True)


@overload
def rescale_to_gsd(grid: ProbMap, spec: GsdSpec) -> ProbMap: ...
@overload
def rescale_to_gsd(grid: LabelMask, spec: GsdSpec) -> LabelMask: ...
@overload
def rescale_to_gsd(grid: np.ndarray, spec: GsdSpec) -> np.ndarray: ...


def rescale_to_gsd(grid: Union[ProbMap, LabelMask, np.ndarray], spec: GsdSpec) -> Union[ProbMap, LabelMask, np.ndarray]:
    """
    Resamples `grid` from ``spec.source_gsd`` to ``spec.target_gsd``.

    Probability maps and raw image grids (H x W or H x W x C arrays) are resampled
    bilinearly, label masks with nearest neighbour so that no new classes appear.
    A grid whose size does not change is returned as an exact copy.
    """
    if isinstance(grid, LabelMask):
        array, order = grid.data, 0
    elif isinstance(grid, ProbMap):
        array, order = grid.data, 1
    else:
        array, order = np.asarray(grid), 1
        if array.ndim not in (2, 3):
            raise ScaleError("Image grids must have 2 or 3 dimensions, got shape {}".format(array.shape))

    shape = scaled_shape(array.shape[0], array.shape[1], spec)
    if shape == array.shape[:2]:
        result = array.copy()
    else:
        result = _zoom(array, shape, order)
        if result.shape[:2] != shape:
            raise ScaleError("Resampled shape {} differs from expected {}".format(result.shape[:2], shape))
    log.debug("Rescaled %s -> %s at scale %.6f", array.shape, result.shape, spec.scale)

    if isinstance(grid, LabelMask):
        return LabelMask(result, ignore_value=grid.ignore_value)
    if isinstance(grid, ProbMap):
        return ProbMap(result)
    return result
