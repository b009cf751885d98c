import sys
from typing import Dict
from typing import List
from typing import Optional
from typing import Union

if sys.version_info >= (3, 8):
    from typing import TypedDict
else:
    from typing_extensions import TypedDict

if sys.version_info >= (3, 11):
    from typing import NotRequired
else:
    from typing_extensions import NotRequired


class NodeSchema(TypedDict):
    id: str
    display_name: NotRequired[str]
    rank: str
    parent: Optional[str]


class TaxonomyFileSchema(TypedDict):
    name: NotRequired[str]
    rank_order: List[str]
    nodes: List[NodeSchema]
    channel_binding: List[str]
    misc: NotRequired[Optional[str]]
    unknown: NotRequired[List[str]]


class BlobSchema(TypedDict):
    leaf: str
    center: List[int]
    radius: int


class FieldSpecSchema(TypedDict):
    name: NotRequired[str]
    taxonomy: str
    seed: int
    height: int
    width: int
    blobs: List[BlobSchema]
    flip_prob: NotRequired[float]
    # "inf" for one-hot fields
    dirichlet_sharpness: NotRequired[Union[float, str]]


class RunConfigSchema(TypedDict, total=False):
    taxonomy: str
    prob_maps: List[str]
    masks: List[str]
    predictions: List[str]
    target_gsd: float
    source_gsd: Union[float, Dict[str, float], None]
    tile_size: Optional[int]
    overlap: int
    thresholds: Optional[str]
    tta: List[str]
    exclude: List[str]
    include_unknown: bool
    include_misc: bool
    ranks: List[str]
    beta: float
    normalize: str
    objective: str
    step: float
    classes: Optional[int]
    spec: Optional[str]
    out: str
    jobs: int
