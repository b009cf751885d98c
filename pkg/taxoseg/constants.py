"""
taxoseg constants
"""
import sys
if sys.version_info >= (3, 8):
    from typing import Final
else:
    from typing_extensions import Final

# Label masks
IGNORE_INDEX: Final = 255
MAX_LEAF_CHANNELS: Final = 255

# Probability maps
PROB_DTYPE: Final = '<f4'
ARRAY_MAGIC: Final = b'\x93NUMPY'
ARRAY_VERSION: Final = (1, 0)
ARRAY_ALIGN: Final = 64

# Taxonomy file keys
RANK_ORDER: Final = 'rank_order'
NODES: Final = 'nodes'
CHANNEL_BINDING: Final = 'channel_binding'
MISC: Final = 'misc'
UNKNOWN: Final = 'unknown'
NODE_ID: Final = 'id'
DISPLAY_NAME: Final = 'display_name'
RANK: Final = 'rank'
PARENT: Final = 'parent'
NAME: Final = 'name'

# Reserved leaf id for the non-vegetation catch-all
MISC_LEAF_ID: Final = 'misc'

# TTA grid symmetries
IDENTITY = 'identity'
HFLIP = 'hflip'
VFLIP = 'vflip'
ROT90 = 'rot90'
ROT180 = 'rot180'
ROT270 = 'rot270'
TTA_TRANSFORMS = (IDENTITY, HFLIP, VFLIP, ROT90, ROT180, ROT270)

# Class weight normalization
NORMALIZE_NONE = 'none'
NORMALIZE_MEAN_ONE = 'mean_one'
NORMALIZATIONS = (NORMALIZE_NONE, NORMALIZE_MEAN_ONE)

# Calibration objectives
OBJECTIVE_F1 = 'f1'
OBJECTIVE_DICE = 'dice'
OBJECTIVES = (OBJECTIVE_F1, OBJECTIVE_DICE)

# Calibration / coverage flags
FLAG_NO_SUPPORT = 'no support'
FLAG_NO_PIXELS = 'no non-ignore pixels'
FLAG_ZERO_X_VARIANCE = 'zero x variance'
FLAG_ZERO_Y_VARIANCE = 'zero y variance'

# Artifact names
PREDICTION_SUFFIX = '.png'
CONFIDENCE_SUFFIX = '.confidence.npy'
SIDECAR_SUFFIX = '.json'
TTA_CONFIDENCE_SUFFIX = '.tta_confidence.npy'
PROB_MAP_SUFFIX = '.npy'
MASK_SUFFIX = '.png'
TTA_SEPARATOR = '@'
TILE_SEPARATOR = '__'
RUN_ECHO = 'run.json'
ERROR_LOG = 'errors.log'
REPORT_JSON = 'report.json'
REPORT_CSV = 'report_classes.csv'
CONFUSION_CSV = 'confusion_{rank}.csv'
THRESHOLDS_JSON = 'thresholds.json'
WEIGHTS_JSON = 'weights.json'
CONFIDENCE_SUMMARY = 'confidence_summary.json'

# Exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_PARTIAL_FAILURE = 2

DEFAULT_ENCODING = 'utf-8'
