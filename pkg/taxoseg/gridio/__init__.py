"""
Probability map and label mask IO, GSD normalization and tiling
"""
from taxoseg.gridio.codec import decode_float_grid
from taxoseg.gridio.codec import encode_float_grid
from taxoseg.gridio.codec import load_label_mask
from taxoseg.gridio.codec import load_prob_map
from taxoseg.gridio.codec import read_label_mask
from taxoseg.gridio.codec import read_prob_map
from taxoseg.gridio.codec import store_label_mask
from taxoseg.gridio.codec import store_prob_map
from taxoseg.gridio.codec import write_label_mask
from taxoseg.gridio.codec import write_prob_map
from taxoseg.gridio.grids import GsdSpec
from taxoseg.gridio.grids import LabelMask
from taxoseg.gridio.grids import ProbMap
from taxoseg.gridio.grids import TilePlan
from taxoseg.gridio.scale import rescale_to_gsd
from taxoseg.gridio.scale import scaled_shape
from taxoseg.gridio.tiling import cut_tiles
from taxoseg.gridio.tiling import plan_tiles
from taxoseg.gridio.tiling import stitch_maps

__all__ = [
    'GsdSpec',
    'LabelMask',
    'ProbMap',
    'TilePlan',
    'cut_tiles',
    'decode_float_grid',
    'encode_float_grid',
    'load_label_mask',
    'load_prob_map',
    'plan_tiles',
    'read_label_mask',
    'read_prob_map',
    'rescale_to_gsd',
    'scaled_shape',
    'stitch_maps',
    'store_label_mask',
    'store_prob_map',
    'write_label_mask',
    'write_prob_map',
]
