"""
taxoseg exceptions
"""
from typing import Optional


class TaxosegException(Exception):
    """
    Base class for all taxoseg exceptions.
    """

    msg: str = "taxoseg error"

    def __init__(self, msg: Optional[str] = None, cause: Optional[Exception] = None) -> None:
        self.msg = msg if msg is not None else self.msg
        self.cause = cause
        super(TaxosegException, self).__init__(self.msg)


class TaxonomyError(TaxosegException):
    """
    Raised when a taxonomy file or tree is malformed.

    ``node_id`` names the offending node when there is one.
    """
    msg = "Invalid taxonomy"

    def __init__(
        self,
        msg: Optional[str] = None,
        cause: Optional[Exception] = None,
        node_id: Optional[str] = None,
    ) -> None:
        self.node_id = node_id
        super(TaxonomyError, self).__init__(msg, cause)


class UnknownNodeError(TaxonomyError):
    """
    Raised when a node id is not part of the tree
    """
    msg = "Unknown taxonomy node"


class UnknownRankError(TaxonomyError):
    """
    Raised when a rank name is not declared in the tree's rank order
    """
    msg = "Unknown taxonomy rank"


class GridFormatError(TaxosegException):
    """
    Raised when a probability map or label mask cannot be decoded
    """
    msg = "Error decoding grid"


class ScaleError(TaxosegException):
    """
    Raised when a ground sample distance rescale is invalid
    """
    msg = "Error rescaling grid"


class TilingError(TaxosegException):
    """
    Raised when a tile plan cannot be built or tiles cannot be stitched
    """
    msg = "Error tiling grid"


class InferenceError(TaxosegException):
    """
    Raised when inference inputs do not match the taxonomy
    """
    msg = "Error performing inference"


class ThresholdError(InferenceError):
    """
    Raised when confidence thresholds are invalid
    """
    msg = "Invalid confidence thresholds"


class TtaError(InferenceError):
    """
    Raised when test-time augmentation views cannot be fused
    """
    msg = "Error fusing augmentation views"


class BalanceError(TaxosegException):
    """
    Raised when class weights cannot be computed
    """
    msg = "Error computing class weights"


class MetricsError(TaxosegException):
    """
    Raised when an evaluation cannot be computed
    """
    msg = "Error computing metrics"


class ShapeMismatchError(MetricsError):
    """
    Raised when a prediction and its ground truth differ in shape
    """
    msg = "Prediction and ground truth shapes differ"


class FieldSpecError(TaxosegException):
    """
    Raised when a synthetic field specification is invalid
    """
    msg = "Invalid synthetic field specification"


class ConfigError(TaxosegException):
    """
    Raised when a run configuration is invalid or references missing files
    """
    msg = "Invalid run configuration"
