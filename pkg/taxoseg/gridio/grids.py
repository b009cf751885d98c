"""
Grid value types shared by every taxoseg module
"""
import math
from dataclasses import dataclass
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np

from taxoseg.constants import IGNORE_INDEX
from taxoseg.exceptions import GridFormatError
from taxoseg.exceptions import ScaleError
from taxoseg.settings import get_settings_value


@dataclass(eq=False)
class ProbMap:
    """
    An H x W x C grid of per-pixel class probabilities, stored as C-order float32.

    Channel ``c`` holds the probability of the leaf bound to channel ``c`` of the taxonomy.
    """
    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise GridFormatError("A probability map needs 3 dimensions (H, W, C), got shape {}".format(data.shape))
        self.data = data

    def __repr__(self) -> str:
        return "ProbMap<{}x{}x{}>".format(*self.data.shape)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.height, self.width, self.channels

    def check(self, tolerance: Optional[float] = None) -> List[str]:
        """
        Returns a description of every violated probability invariant, or an empty list.
        `tolerance` defaults to the ``prob_sum_tolerance`` setting.
        """
        if tolerance is None:
            tolerance = get_settings_value('prob_sum_tolerance')
        problems = []
        if not np.isfinite(self.data).all():
            problems.append("contains non-finite values")
            return problems
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            problems.append("values outside [0, 1]")
        sums = self.data.sum(axis=2, dtype=np.float64)
        if sums.size and np.abs(sums - 1.0).max() > tolerance:
            problems.append("channel sums deviate from 1 by more than {}".format(tolerance))
        return problems


@dataclass(eq=False)
class LabelMask:
    """
    An H x W grid of leaf channel indices. ``ignore_value`` marks unannotated pixels.
    """
    data: np.ndarray
    ignore_value: int = IGNORE_INDEX

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise GridFormatError("A label mask needs 2 dimensions (H, W), got shape {}".format(data.shape))
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                raise GridFormatError("Label values must fit in 8 bits")
            data = data.astype(np.uint8)
        self.data = np.ascontiguousarray(data)

    def __repr__(self) -> str:
        return "LabelMask<{}x{}>".format(*self.data.shape)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    @property
    def valid(self) -> np.ndarray:
        """
        Boolean grid of annotated (non-ignore) pixels
        """
        return self.data != self.ignore_value

    def check(self, num_classes: int) -> List[str]:
        labels = self.data[self.valid]
        if labels.size and int(labels.max()) >= num_classes:
            bad = sorted(set(int(v) for v in np.unique(labels[labels >= num_classes])))
            return ["class values {} are not below {}".format(bad, num_classes)]
        return []


@dataclass(frozen=True)
class GsdSpec:
    """
    Ground sample distances in mm/pixel
    """
    source_gsd: float
    target_gsd: float

    def __post_init__(self) -> None:
        for name in ('source_gsd', 'target_gsd'):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ScaleError("{} must be a positive number, got {!r}".format(name, value))

    @property
    def scale(self) -> float:
        return self.source_gsd / self.target_gsd


@dataclass(frozen=True)
class TilePlan:
    """
    Tile origins covering a ``height`` x ``width`` image, in row-major scan order.
    """
    height: int
    width: int
    tile_size: int
    overlap: int
    origins: Tuple[Tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.origins)

    def window(self, origin: Tuple[int, int]) -> Tuple[slice, slice]:
        row, col = origin
        return slice(row, row + self.tile_size), slice(col, col + self.tile_size)
