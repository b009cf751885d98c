"""
Class weights from the effective number of samples, counted in pixels
"""
import logging
from dataclasses import dataclass
from typing import Iterable
from typing import Optional
from typing import Tuple

import numpy as np

from taxoseg._util import canonical_json
from taxoseg.constants import NORMALIZATIONS
from taxoseg.constants import NORMALIZE_MEAN_ONE
from taxoseg.exceptions import BalanceError
from taxoseg.gridio import LabelMask
from taxoseg.settings import get_settings_value

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())


@dataclass(frozen=True)
class PixelCounts:
    """
    Per-class pixel counts in channel order.

    ``total`` counts every pixel seen, ignored ones included.
    """
    counts: Tuple[int, ...]
    total: int = 0

    @property
    def counted(self) -> int:
        return sum(self.counts)

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    def __add__(self, other: 'PixelCounts') -> 'PixelCounts':
        if not isinstance(other, PixelCounts):
            return NotImplemented
        if other.num_classes != self.num_classes:
            raise BalanceError("Cannot merge counts over {} and {} classes".format(self.num_classes, other.num_classes))
        return PixelCounts(
            counts=tuple(a + b for a, b in zip(self.counts, other.counts)),
            total=self.total + other.total,
        )


@dataclass(frozen=True)
class ClassWeights:
    weights: Tuple[float, ...]
    beta: float
    normalization: str
    counts: Tuple[int, ...]

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64)

    def to_json(self) -> str:
        return canonical_json({
            'beta': self.beta,
            'normalization': self.normalization,
            'counts': list(self.counts),
            'weights': list(self.weights),
        })


def count_pixels(masks: Iterable[LabelMask], num_classes: int) -> PixelCounts:
    """
    Tallies class occurrences over `masks`, skipping ignore pixels.

    :raises BalanceError: if a mask holds a class value outside ``[0, num_classes)``
    """
    counts = np.zeros(num_classes, dtype=np.int64)
    total = 0
    for mask in masks:
        labels = mask.data[mask.valid]
        if labels.size and int(labels.max()) >= num_classes:
            raise BalanceError("Mask holds class {} but only {} classes exist".format(int(labels.max()), num_classes))
        counts += np.bincount(labels, minlength=num_classes)
        total += mask.data.size
    return PixelCounts(counts=tuple(int(c) for c in counts), total=total)


def effective_weights(
    counts: PixelCounts,
    beta: Optional[float] = None,
    normalization: Optional[str] = None,
) -> ClassWeights:
    """
    Weights each class by the inverse effective number of samples,
    ``(1 - beta) / (1 - beta ** n)``.

    Classes with no pixels get weight 0 and take no part in normalization. With
    ``mean_one`` the nonzero weights are rescaled to average exactly 1.
    """
    beta = get_settings_value('beta') if beta is None else beta
    normalization = get_settings_value('weight_normalization') if normalization is None else normalization
    if not 0.0 <= beta < 1.0:
        raise BalanceError("beta must be in [0, 1), got {!r}".format(beta))
    if normalization not in NORMALIZATIONS:
        raise BalanceError("Unknown normalization '{}', expected one of {}".format(normalization, NORMALIZATIONS))

    n = np.array(counts.counts, dtype=np.float64)
    present = n > 0
    weights = np.zeros_like(n)
    with np.errstate(under='ignore'):
        # beta ** n underflows to 0 for large pixel counts, leaving the (1 - beta) limit
        decay = np.power(beta, n[present])
    weights[present] = (1.0 - beta) / (1.0 - decay)

    if normalization == NORMALIZE_MEAN_ONE and present.any():
        weights[present] /= weights[present].mean()
    log.debug("Class weights at beta=%s: %s", beta, weights)
    return ClassWeights(
        weights=tuple(float(w) for w in weights),
        beta=float(beta),
        normalization=normalization,
        counts=tuple(counts.counts),
    )
