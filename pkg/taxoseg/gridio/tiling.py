"""
Tiled inference geometry: planning, cutting and stitching
"""
import itertools
import logging
from typing import Iterable
from typing import List
from typing import Sequence
from typing import Tuple

import numpy as np

from taxoseg.exceptions import TilingError
from taxoseg.gridio.grids import ProbMap
from taxoseg.gridio.grids import TilePlan

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

Origin = Tuple[int, int]


def _axis_origins(length: int, tile_size: int, stride: int) -> List[int]:
    origins = list(range(0, length - tile_size + 1, stride))
    if origins[-1] + tile_size < length:
        # clamp the last tile to the image edge instead of padding
        origins.append(length - tile_size)
    return origins


def plan_tiles(height: int, width: int, tile_size: int, overlap: int) -> TilePlan:
    """
    Plans square tiles of `tile_size` pixels advancing by ``tile_size - overlap``.

    :raises TilingError: if the overlap is not in ``[0, tile_size)`` or the tile is larger than the image
    """
    if tile_size <= 0:
        raise TilingError("Tile size must be positive, got {}".format(tile_size))
    if not 0 <= overlap < tile_size:
        raise TilingError("Overlap must be in [0, {}), got {}".format(tile_size, overlap))
    if height <= 0 or width <= 0:
        raise TilingError("Cannot tile an empty {}x{} image".format(height, width))
    if tile_size > min(height, width):
        raise TilingError("Tile size {} is larger than the {}x{} image".format(tile_size, height, width))

    stride = tile_size - overlap
    rows = _axis_origins(height, tile_size, stride)
    cols = _axis_origins(width, tile_size, stride)
    origins = tuple(itertools.product(rows, cols))
    log.debug("Planned %d tiles of %d px over %dx%d", len(origins), tile_size, height, width)
    return TilePlan(height=height, width=width, tile_size=tile_size, overlap=overlap, origins=origins)


def cut_tiles(prob_map: ProbMap, plan: TilePlan) -> List[Tuple[Origin, ProbMap]]:
    if (prob_map.height, prob_map.width) != (plan.height, plan.width):
        raise TilingError("Plan for {}x{} does not fit a {}x{} map".format(
            plan.height, plan.width, prob_map.height, prob_map.width))
    return [(origin, ProbMap(prob_map.data[plan.window(origin)])) for origin in plan.origins]


def stitch_maps(tiles: Iterable[Tuple[Origin, ProbMap]], height: int, width: int) -> ProbMap:
    """
    Reassembles overlapping tiles; each pixel is the mean of the tiles covering it.

    Tiles are summed in origin order, so the result does not depend on arrival order.
    """
    ordered: Sequence[Tuple[Origin, ProbMap]] = sorted(tiles, key=lambda item: tuple(item[0]))
    if not ordered:
        raise TilingError("No tiles to stitch")

    channels = ordered[0][1].channels
    total = np.zeros((height, width, channels), dtype=np.float64)
    hits = np.zeros((height, width), dtype=np.int64)
    for (row, col), tile in ordered:
        if tile.channels != channels:
            raise TilingError("Tile at ({}, {}) has {} channels, expected {}".format(row, col, tile.channels, channels))
        if row < 0 or col < 0 or row + tile.height > height or col + tile.width > width:
            raise TilingError("Tile at ({}, {}) of size {}x{} lies outside the {}x{} image".format(
                row, col, tile.height, tile.width, height, width))
        total[row:row + tile.height, col:col + tile.width] += tile.data
        hits[row:row + tile.height, col:col + tile.width] += 1

    uncovered = np.argwhere(hits == 0)
    if len(uncovered):
        row, col = (int(v) for v in uncovered[0])
        raise TilingError("Pixel ({}, {}) is not covered by any tile ({} uncovered)".format(row, col, len(uncovered)))
    return ProbMap((total / hits[:, :, np.newaxis]).astype(np.float32))
