"""
Hierarchical inference over a taxonomy.

Leaf probabilities are summed up the tree, then every pixel descends from the root,
choosing at each node the child holding the most aggregated probability. Ties go to
the child whose first leaf has the lowest channel index.
"""
import json
import logging
import math
from dataclasses import dataclass
from typing import Dict
from typing import Iterator
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from taxoseg._util import canonical_json
from taxoseg.constants import HFLIP
from taxoseg.constants import IDENTITY
from taxoseg.constants import ROT180
from taxoseg.constants import ROT270
from taxoseg.constants import ROT90
from taxoseg.constants import TTA_TRANSFORMS
from taxoseg.constants import VFLIP
from taxoseg.exceptions import InferenceError
from taxoseg.exceptions import ThresholdError
from taxoseg.exceptions import TtaError
from taxoseg.gridio import LabelMask
from taxoseg.gridio import ProbMap
from taxoseg.gridio import TilePlan
from taxoseg.gridio import decode_float_grid
from taxoseg.gridio import encode_float_grid
from taxoseg.gridio import load_label_mask
from taxoseg.gridio import store_label_mask
from taxoseg.taxonomy import TaxonomyTree

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())


def _check_channels(prob_map: ProbMap, tree: TaxonomyTree) -> None:
    if prob_map.channels != tree.num_channels:
        raise InferenceError("Probability map has {} channels but the taxonomy binds {} leaves".format(
            prob_map.channels, tree.num_channels))


def _node_order(tree: TaxonomyTree) -> Tuple[str, ...]:
    # breadth first from the root, so every parent precedes its children
    order = [tree.root_id]
    for node_id in order:
        order.extend(tree.children(node_id))
    return tuple(order)


class NodeProbMaps(object):
    """
    Aggregated probability grid for every node of a taxonomy.

    ``maps[node_id]`` is the H x W grid of summed leaf probabilities under ``node_id``.
    """

    def __init__(self, tree: TaxonomyTree, node_ids: Sequence[str], data: np.ndarray) -> None:
        self.tree = tree
        self.node_ids = tuple(node_ids)
        self.data = data
        self._column = {node_id: index for index, node_id in enumerate(self.node_ids)}

    def __repr__(self) -> str:
        return "NodeProbMaps<{}x{}, {} nodes>".format(self.height, self.width, len(self.node_ids))

    def __getitem__(self, node_id: str) -> np.ndarray:
        try:
            return self.data[:, :, self._column[node_id]]
        except KeyError:
            raise KeyError("No aggregated map for node '{}'".format(node_id)) from None

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._column

    def __iter__(self) -> Iterator[str]:
        return iter(self.node_ids)

    def __len__(self) -> int:
        return len(self.node_ids)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    def column(self, node_id: str) -> int:
        return self._column[node_id]


def aggregate_to_nodes(prob_map: ProbMap, tree: TaxonomyTree) -> NodeProbMaps:
    """
    Sums leaf channels into every node of `tree`. Leaves are copied through unchanged.

    :raises InferenceError: if the map's channel count differs from the taxonomy's leaf count
    """
    _check_channels(prob_map, tree)
    node_ids = _node_order(tree)
    membership = np.zeros((tree.num_channels, len(node_ids)), dtype=np.float64)
    for column, node_id in enumerate(node_ids):
        for leaf_id in tree.leaves_under(node_id):
            membership[tree.channel_of(leaf_id), column] = 1.0
    data = prob_map.data.astype(np.float64) @ membership
    return NodeProbMaps(tree, node_ids, data)


@dataclass(eq=False)
class PredictionMap:
    """
    Per-pixel chosen leaf with its ancestor and confidence at every rank.

    :param chosen_leaf: H x W leaf channel indices
    :param rank_choice: rank -> H x W indices into ``tree.rank_nodes(rank)``
    :param rank_confidence: rank -> H x W aggregated probability of the chosen node
    """
    tree: TaxonomyTree
    chosen_leaf: np.ndarray
    rank_choice: Dict[str, np.ndarray]
    rank_confidence: Dict[str, np.ndarray]

    def __repr__(self) -> str:
        return "PredictionMap<{}x{}, {} ranks>".format(self.height, self.width, len(self.rank_choice))

    @classmethod
    def from_leaves(
        cls,
        tree: TaxonomyTree,
        chosen_leaf: np.ndarray,
        rank_confidence: Mapping[str, np.ndarray],
    ) -> 'PredictionMap':
        """
        Builds a prediction whose per-rank choices are projected from `chosen_leaf`.
        """
        leaves = np.asarray(chosen_leaf, dtype=np.uint8)
        choices = {rank: tree.projection(rank)[leaves].astype(np.int32) for rank in tree.rank_order}
        confidences = {
            rank: np.clip(np.asarray(rank_confidence[rank], dtype=np.float32), 0.0, 1.0)
            for rank in tree.rank_order
        }
        return cls(tree=tree, chosen_leaf=leaves, rank_choice=choices, rank_confidence=confidences)

    @property
    def height(self) -> int:
        return int(self.chosen_leaf.shape[0])

    @property
    def width(self) -> int:
        return int(self.chosen_leaf.shape[1])

    def leaf_mask(self) -> LabelMask:
        return LabelMask(self.chosen_leaf)

    def node_at(self, rank: str, row: int, col: int) -> str:
        return self.tree.rank_nodes(rank)[int(self.rank_choice[rank][row, col])]

    def confidence_stack(self) -> np.ndarray:
        """
        H x W x R confidences with ranks in leaf-to-root order
        """
        return np.stack([self.rank_confidence[rank] for rank in self.tree.rank_order], axis=2).astype(np.float32)

    def check(self) -> List[str]:
        """
        Returns every rank whose choices disagree with the projection of the chosen leaf.
        """
        problems = []
        for rank in self.tree.rank_order:
            expected = self.tree.projection(rank)[self.chosen_leaf]
            if not np.array_equal(expected, self.rank_choice[rank]):
                problems.append("rank '{}' choices are not ancestors of the chosen leaves".format(rank))
            confidence = self.rank_confidence[rank]
            if confidence.size and (confidence.min() < 0.0 or confidence.max() > 1.0):
                problems.append("rank '{}' confidences fall outside [0, 1]".format(rank))
        return problems


def _gather(nodes: NodeProbMaps, chosen_leaf: np.ndarray, tree: TaxonomyTree) -> Dict[str, np.ndarray]:
    confidences = {}
    for rank in tree.rank_order:
        columns = np.array([nodes.column(node_id) for node_id in tree.rank_nodes(rank)], dtype=np.intp)
        picked = columns[tree.projection(rank)[chosen_leaf]]
        confidences[rank] = np.take_along_axis(nodes.data, picked[:, :, np.newaxis], axis=2)[:, :, 0]
    return confidences


def hierarchical_argmax(nodes: NodeProbMaps, tree: TaxonomyTree) -> PredictionMap:
    """
    Descends from the root to a leaf at every pixel, following the child with the
    largest aggregated probability, and records the winning node's probability as
    the confidence at every rank.
    """
    current = np.full((nodes.height, nodes.width), nodes.column(tree.root_id), dtype=np.intp)
    for node_id in nodes.node_ids:
        children = tree.children(node_id)
        if not children:
            continue
        at_node = current == nodes.column(node_id)
        if not at_node.any():
            continue
        columns = np.array([nodes.column(child) for child in children], dtype=np.intp)
        child_mass = nodes.data[at_node][:, columns]
        # np.argmax keeps the first maximum, and children come in tie-break order
        current[at_node] = columns[np.argmax(child_mass, axis=1)]

    channel_of_column = np.zeros(len(nodes.node_ids), dtype=np.uint8)
    for node_id in nodes.node_ids:
        if not tree.children(node_id):
            channel_of_column[nodes.column(node_id)] = tree.channel_of(node_id)
    chosen_leaf = channel_of_column[current]
    return PredictionMap.from_leaves(tree, chosen_leaf, _gather(nodes, chosen_leaf, tree))


def flat_argmax(prob_map: ProbMap, tree: TaxonomyTree) -> PredictionMap:
    """
    Baseline: the channel with the highest probability wins (lowest channel on ties).
    Per-rank choices are projections of that leaf, with their aggregated probabilities.
    """
    _check_channels(prob_map, tree)
    chosen_leaf = np.argmax(prob_map.data, axis=2).astype(np.uint8)
    return PredictionMap.from_leaves(tree, chosen_leaf, _gather(aggregate_to_nodes(prob_map, tree), chosen_leaf, tree))


def _threshold_table(thresholds: Mapping[str, float], tree: TaxonomyTree) -> np.ndarray:
    table = np.zeros(tree.num_channels, dtype=np.float64)
    for leaf_id, tau in thresholds.items():
        if leaf_id not in tree.leaf_ids:
            raise ThresholdError("Threshold given for unknown leaf '{}'".format(leaf_id))
        if leaf_id == tree.misc_id:
            raise ThresholdError("The misc leaf cannot carry a threshold")
        try:
            value = float(tau)
        except (TypeError, ValueError):
            value = math.nan
        if not 0.0 <= value <= 1.0:
            raise ThresholdError("Threshold for '{}' must be in [0, 1], got {!r}".format(leaf_id, tau))
        table[tree.channel_of(leaf_id)] = value
    return table


def check_thresholds(thresholds: Mapping[str, float], tree: TaxonomyTree) -> None:
    """
    Validates a threshold mapping against `tree` without applying it.

    :raises ThresholdError: see :func:`apply_confidence_thresholds`
    """
    if thresholds and tree.misc_channel is None:
        raise ThresholdError("Confidence thresholds need a taxonomy with a misc leaf")
    _threshold_table(thresholds, tree)


def apply_confidence_thresholds(
    pred: PredictionMap,
    thresholds: Mapping[str, float],
    tree: Optional[TaxonomyTree] = None,
) -> PredictionMap:
    """
    Moves pixels whose leaf confidence is below their leaf's threshold to misc.

    A pixel keeps its leaf when ``confidence >= threshold``. Reassigned pixels carry
    their leaf confidence at every rank; their per-rank choices are projected from misc.

    :raises ThresholdError: for thresholds on unknown leaves or on misc, values outside
        ``[0, 1]``, or a taxonomy without a misc leaf
    """
    tree = tree if tree is not None else pred.tree
    if tree.misc_channel is None:
        raise ThresholdError("Confidence thresholds need a taxonomy with a misc leaf")
    table = _threshold_table(thresholds, tree)
    leaf_confidence = pred.rank_confidence[tree.leaf_rank]
    reassigned = leaf_confidence.astype(np.float64) < table[pred.chosen_leaf]
    if not reassigned.any():
        return pred

    chosen_leaf = np.where(reassigned, np.uint8(tree.misc_channel), pred.chosen_leaf)
    confidences = {
        rank: np.where(reassigned, leaf_confidence, pred.rank_confidence[rank]) for rank in tree.rank_order
    }
    log.debug("Thresholds moved %d of %d pixels to misc", int(reassigned.sum()), reassigned.size)
    return PredictionMap.from_leaves(tree, chosen_leaf, confidences)


def predict(
    prob_map: ProbMap,
    tree: TaxonomyTree,
    plan: Optional[TilePlan] = None,
    thresholds: Optional[Mapping[str, float]] = None,
) -> PredictionMap:
    """
    Runs aggregation and hierarchical argmax, tile by tile when a plan is given, then
    applies the optional confidence thresholds.
    """
    _check_channels(prob_map, tree)
    if plan is None:
        pred = hierarchical_argmax(aggregate_to_nodes(prob_map, tree), tree)
    else:
        chosen_leaf = np.zeros((prob_map.height, prob_map.width), dtype=np.uint8)
        confidences = {rank: np.zeros(chosen_leaf.shape, dtype=np.float32) for rank in tree.rank_order}
        for origin in plan.origins:
            window = plan.window(origin)
            tile = hierarchical_argmax(aggregate_to_nodes(ProbMap(prob_map.data[window]), tree), tree)
            chosen_leaf[window] = tile.chosen_leaf
            for rank in tree.rank_order:
                confidences[rank][window] = tile.rank_confidence[rank]
        log.debug("Predicted %r in %d tiles", prob_map, len(plan))
        pred = PredictionMap.from_leaves(tree, chosen_leaf, confidences)
    if thresholds:
        pred = apply_confidence_thresholds(pred, thresholds, tree)
    return pred


@dataclass(eq=False)
class TtaView:
    """
    A probability map predicted on an image transformed by `transform`.
    """
    prob_map: ProbMap
    transform: str = IDENTITY

    def __post_init__(self) -> None:
        if self.transform not in TTA_TRANSFORMS:
            raise TtaError("Unknown augmentation transform '{}'".format(self.transform))


def apply_tta_transform(grid: np.ndarray, transform: str) -> np.ndarray:
    """
    Applies a grid symmetry to the first two axes of `grid`.
    """
    if transform == IDENTITY:
        return grid
    if transform == HFLIP:
        return np.flip(grid, axis=1)
    if transform == VFLIP:
        return np.flip(grid, axis=0)
    if transform == ROT90:
        return np.rot90(grid, k=1, axes=(0, 1))
    if transform == ROT180:
        return np.rot90(grid, k=2, axes=(0, 1))
    if transform == ROT270:
        return np.rot90(grid, k=3, axes=(0, 1))
    raise TtaError("Unknown augmentation transform '{}'".format(transform))


_INVERSE = {
    IDENTITY: IDENTITY,
    HFLIP: HFLIP,
    VFLIP: VFLIP,
    ROT90: ROT270,
    ROT180: ROT180,
    ROT270: ROT90,
}


def invert_tta_transform(grid: np.ndarray, transform: str) -> np.ndarray:
    try:
        return apply_tta_transform(grid, _INVERSE[transform])
    except KeyError:
        raise TtaError("Unknown augmentation transform '{}'".format(transform)) from None


def fuse_tta(views: Sequence[TtaView]) -> Tuple[ProbMap, np.ndarray]:
    """
    Maps every view back through its inverse transform and averages them.

    Returns the fused map and the fused probability of each pixel's winning channel.
    Values are sorted across views before summing, so the result does not depend on
    view order.

    :raises TtaError: on an empty view list or views whose aligned shapes differ
    """
    if not views:
        raise TtaError("Cannot fuse an empty list of views")
    aligned = [invert_tta_transform(view.prob_map.data, view.transform) for view in views]
    shape = aligned[0].shape
    for view, grid in zip(views, aligned):
        if grid.shape != shape:
            raise TtaError("View '{}' has shape {} after inversion, expected {}".format(
                view.transform, grid.shape, shape))
    stacked = np.sort(np.stack(aligned, axis=0).astype(np.float64), axis=0)
    fused = (stacked.sum(axis=0) / len(views)).astype(np.float32)
    confidence = fused.max(axis=2)
    log.debug("Fused %d views into %s", len(views), shape)
    return ProbMap(fused), confidence


def confidence_summary(pred: PredictionMap) -> Dict[str, Dict[str, float]]:
    """
    Leaf-rank confidence statistics for every predicted leaf, in channel order.
    """
    confidence = pred.rank_confidence[pred.tree.leaf_rank]
    summary = {}
    for channel, leaf_id in enumerate(pred.tree.channel_binding):
        values = confidence[pred.chosen_leaf == channel].astype(np.float64)
        if not values.size:
            continue
        p10, p50, p90 = np.quantile(values, [0.1, 0.5, 0.9])
        summary[leaf_id] = {
            'pixels': int(values.size),
            'mean': float(values.mean()),
            'p10': float(p10),
            'p50': float(p50),
            'p90': float(p90),
        }
    return summary


def store_prediction(pred: PredictionMap) -> Tuple[bytes, bytes, str]:
    """
    Serializes a prediction as (leaf PNG, H x W x R confidence array, sidecar JSON).
    """
    tree = pred.tree
    sidecar = {
        'taxonomy_hash': tree.content_hash,
        'height': pred.height,
        'width': pred.width,
        'ranks': list(tree.rank_order),
        'channel_binding': list(tree.channel_binding),
        'rank_nodes': {rank: list(tree.rank_nodes(rank)) for rank in tree.rank_order},
    }
    return store_label_mask(pred.leaf_mask()), encode_float_grid(pred.confidence_stack()), canonical_json(sidecar)


def load_prediction(leaf_png: bytes, confidence: bytes, sidecar: str, tree: TaxonomyTree) -> PredictionMap:
    """
    Restores a prediction written by :func:`store_prediction` for the same taxonomy.
    """
    try:
        meta = json.loads(sidecar)
    except ValueError as e:
        raise InferenceError("Unreadable prediction sidecar: {}".format(e), e) from e
    if meta.get('taxonomy_hash') != tree.content_hash:
        raise InferenceError("Prediction was written for a different taxonomy")
    leaves = load_label_mask(leaf_png).data
    stack = decode_float_grid(confidence)
    if stack.shape != leaves.shape + (len(tree.rank_order),):
        raise InferenceError("Confidence grid shape {} does not match {} ranks over {}".format(
            stack.shape, len(tree.rank_order), leaves.shape))
    if leaves.size and int(leaves.max()) >= tree.num_channels:
        raise InferenceError("Prediction holds channels outside the taxonomy")
    confidences = {rank: stack[:, :, index] for index, rank in enumerate(tree.rank_order)}
    return PredictionMap.from_leaves(tree, leaves, confidences)
