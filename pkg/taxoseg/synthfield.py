"""
Deterministic synthetic fields and brute-force reference oracles.

All randomness comes from ``numpy.random.Generator(numpy.random.PCG64(seed))`` so
that generated fixtures are identical across platforms and numpy versions.
"""
import json
import logging
import math
from dataclasses import dataclass
from typing import Any
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from taxoseg._schema import BlobSchema
from taxoseg._schema import FieldSpecSchema
from taxoseg._util import canonical_json
from taxoseg.exceptions import FieldSpecError
from taxoseg.exceptions import TaxosegException
from taxoseg.gridio import LabelMask
from taxoseg.gridio import ProbMap
from taxoseg.taxonomy import TaxonNode
from taxoseg.taxonomy import TaxonomyTree
from taxoseg.taxonomy import resolve_taxonomy
from taxoseg.taxonomy import validate_tree

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

DEFAULT_SHARPNESS = 32.0


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class Blob:
    """
    A disc of class `leaf` centred on ``(row, col)``
    """
    leaf: str
    center: Tuple[int, int]
    radius: int


@dataclass(frozen=True)
class FieldSpec:
    """
    Recipe for a synthetic field.

    :param taxonomy: bundled taxonomy name or path to a taxonomy file
    :param flip_prob: probability that a pixel's peak moves to a wrong class
    :param dirichlet_sharpness: weight of the peak class against unit uniform noise;
        ``math.inf`` gives one-hot maps. The name is kept for file compatibility, the
        maps are a normalized peak plus uniform noise rather than a Dirichlet draw
    """
    seed: int
    height: int
    width: int
    taxonomy: str = 'species'
    blobs: Tuple[Blob, ...] = ()
    flip_prob: float = 0.0
    dirichlet_sharpness: float = DEFAULT_SHARPNESS
    name: str = 'field'

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0:
            raise FieldSpecError("Field size must be positive, got {}x{}".format(self.height, self.width))
        if not 0.0 <= self.flip_prob < 1.0:
            raise FieldSpecError("flip_prob must be in [0, 1), got {!r}".format(self.flip_prob))
        if not self.dirichlet_sharpness > 0:
            raise FieldSpecError("dirichlet_sharpness must be positive, got {!r}".format(self.dirichlet_sharpness))
        for blob in self.blobs:
            row, col = blob.center
            if blob.radius < 0:
                raise FieldSpecError("Blob '{}' has a negative radius".format(blob.leaf))
            if row - blob.radius < 0 or col - blob.radius < 0 \
                    or row + blob.radius >= self.height or col + blob.radius >= self.width:
                raise FieldSpecError("Blob '{}' at {} with radius {} does not fit a {}x{} field".format(
                    blob.leaf, blob.center, blob.radius, self.height, self.width))

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> 'FieldSpec':
        try:
            blobs = tuple(
                Blob(leaf=str(b['leaf']), center=(int(b['center'][0]), int(b['center'][1])), radius=int(b['radius']))
                for b in document.get('blobs', ())
            )
            return cls(
                seed=int(document['seed']),
                height=int(document['height']),
                width=int(document['width']),
                taxonomy=str(document.get('taxonomy', 'species')),
                blobs=blobs,
                flip_prob=float(document.get('flip_prob', 0.0)),
                dirichlet_sharpness=float(document.get('dirichlet_sharpness', DEFAULT_SHARPNESS)),
                name=str(document.get('name', 'field')),
            )
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise FieldSpecError("Malformed field spec: {!r}".format(e), e) from e

    def to_dict(self) -> FieldSpecSchema:
        return FieldSpecSchema(
            name=self.name,
            taxonomy=self.taxonomy,
            seed=self.seed,
            height=self.height,
            width=self.width,
            blobs=[BlobSchema(leaf=b.leaf, center=list(b.center), radius=b.radius) for b in self.blobs],
            flip_prob=self.flip_prob,
            dirichlet_sharpness='inf' if math.isinf(self.dirichlet_sharpness) else self.dirichlet_sharpness,
        )

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def parse_field_spec(text: str) -> FieldSpec:
    try:
        document = json.loads(text)
    except ValueError as e:
        raise FieldSpecError("Field spec is not valid JSON: {}".format(e), e) from e
    if not isinstance(document, dict):
        raise FieldSpecError("Field spec must be a JSON object")
    return FieldSpec.from_dict(document)


def paint_labels(spec: FieldSpec, tree: TaxonomyTree) -> LabelMask:
    """
    Paints the blobs, in order, over a misc background.
    """
    if tree.misc_channel is None:
        raise FieldSpecError("Synthetic fields need a taxonomy with a misc leaf for the background")
    labels = np.full((spec.height, spec.width), tree.misc_channel, dtype=np.uint8)
    rows, cols = np.ogrid[:spec.height, :spec.width]
    for blob in spec.blobs:
        if blob.leaf not in tree.leaf_ids:
            raise FieldSpecError("Blob class '{}' is not a leaf of the taxonomy".format(blob.leaf))
        row, col = blob.center
        disc = (rows - row) ** 2 + (cols - col) ** 2 <= blob.radius ** 2
        labels[disc] = tree.channel_of(blob.leaf)
    return LabelMask(labels)


def generate_field(spec: FieldSpec, tree: Optional[TaxonomyTree] = None) -> Tuple[ProbMap, LabelMask]:
    """
    Renders `spec` into a probability map and its ground truth mask.

    Each pixel puts weight ``dirichlet_sharpness`` on its peak class and uniform
    ``[0, 1)`` noise on every class, then normalizes. This is not a Dirichlet sample:
    the peak always keeps at least ``s / (s + C)`` of the mass for sharpness ``s`` and
    ``C`` channels, and with ``s >= 1`` the peak is always the argmax. The peak is the true class,
    except with probability `flip_prob`, where it is a uniformly drawn wrong class.
    The same draws are made whatever the parameters, so equal seeds share noise.
    """
    if tree is None:
        try:
            tree = resolve_taxonomy(spec.taxonomy)
        except TaxosegException as e:
            raise FieldSpecError("Cannot load taxonomy '{}': {}".format(spec.taxonomy, e.msg), e) from e
    mask = paint_labels(spec, tree)
    channels = tree.num_channels
    rng = make_rng(spec.seed)
    noise = rng.uniform(size=(spec.height, spec.width, channels))
    flip_draw = rng.uniform(size=(spec.height, spec.width))
    wrong_draw = rng.uniform(size=(spec.height, spec.width))

    truth = mask.data.astype(np.intp)
    if channels > 1:
        offset = np.minimum((wrong_draw * (channels - 1)).astype(np.intp), channels - 2)
        wrong = offset + (offset >= truth)
        peak = np.where(flip_draw < spec.flip_prob, wrong, truth)
    else:
        peak = truth
    onehot = np.zeros((spec.height, spec.width, channels), dtype=np.float64)
    np.put_along_axis(onehot, peak[:, :, np.newaxis], 1.0, axis=2)

    if math.isinf(spec.dirichlet_sharpness):
        probs = onehot
    else:
        weights = spec.dirichlet_sharpness * onehot + noise
        probs = weights / weights.sum(axis=2, keepdims=True)
    log.debug("Generated %s: %dx%d, %d channels, %.4f flipped", spec.name, spec.height, spec.width, channels,
              float(np.mean(peak != truth)))
    return ProbMap(probs.astype(np.float32)), mask


def oracle_hier_argmax(dist: Sequence[float], tree: TaxonomyTree) -> str:
    """
    Reference hierarchical argmax for one pixel, written as plainly as possible.

    Every child's mass is recomputed from scratch by summing the leaves under it;
    ties go to the child holding the lowest channel.
    """
    values = [float(v) for v in dist]
    if len(values) != tree.num_channels:
        raise ValueError("Distribution has {} values for {} channels".format(len(values), tree.num_channels))
    binding = list(tree.channel_binding)
    node = tree.root_id
    while True:
        kids = [n.id for n in tree.nodes.values() if n.parent_id == node]
        if not kids:
            return node
        best = None
        best_mass = -math.inf
        best_first = len(binding)
        for kid in kids:
            channels = sorted(binding.index(leaf) for leaf in tree.leaves_under(kid))
            mass = math.fsum(values[c] for c in channels)
            if mass > best_mass or (mass == best_mass and channels[0] < best_first):
                best, best_mass, best_first = kid, mass, channels[0]
        node = best  # type: ignore[assignment]


def random_distribution(rng: np.random.Generator, n: int, bits: int = 20) -> np.ndarray:
    """
    A random probability vector whose entries are multiples of ``2 ** -bits``.

    Dyadic entries add up exactly in any order, so reference and vectorized sums agree
    bit for bit; small `bits` make ties frequent.
    """
    total = 2 ** bits
    cuts = np.sort(rng.integers(0, total + 1, size=n - 1))
    counts = np.diff(np.concatenate(([0], cuts, [total])))
    return counts.astype(np.float64) / total


def random_tree(rng: np.random.Generator, max_ranks: int = 5, max_leaves: int = 50) -> TaxonomyTree:
    """
    A random valid taxonomy with 2 to `max_ranks` ranks and 2 to `max_leaves` leaves.

    Nodes occasionally skip a rank, and channels are bound in shuffled order so that
    tie-breaks do not follow declaration order.
    """
    num_ranks = int(rng.integers(2, max_ranks + 1))
    rank_order = ['leaf'] + ['rank{}'.format(i) for i in range(1, num_ranks - 1)] + ['root']
    num_leaves = int(rng.integers(2, max_leaves + 1))

    nodes: Dict[str, TaxonNode] = {}
    parents: Dict[str, str] = {}
    ranks: Dict[str, str] = {}
    level: List[str] = []
    for i in range(num_leaves):
        leaf_id = 'l{:02d}'.format(i)
        ranks[leaf_id] = 'leaf'
        level.append(leaf_id)
    for rank_index in range(1, num_ranks - 1):
        skip = rng.uniform(size=len(level)) < 0.2
        carried = [node_id for node_id, s in zip(level, skip) if s]
        grouped = [level[i] for i in rng.permutation(len(level)) if not skip[i]]
        parents_here: List[str] = []
        while grouped:
            size = int(rng.integers(1, 5))
            parent_id = 'n{}_{:02d}'.format(rank_index, len(parents_here))
            ranks[parent_id] = rank_order[rank_index]
            for child in grouped[:size]:
                parents[child] = parent_id
            grouped = grouped[size:]
            parents_here.append(parent_id)
        level = carried + parents_here
    for node_id in level:
        parents[node_id] = 'root'
    ranks['root'] = 'root'

    for node_id, rank in ranks.items():
        nodes[node_id] = TaxonNode(id=node_id, display_name=node_id, rank=rank, parent_id=parents.get(node_id))
    leaves = ['l{:02d}'.format(i) for i in range(num_leaves)]
    binding = [leaves[i] for i in rng.permutation(num_leaves)]
    tree = TaxonomyTree(nodes=nodes, rank_order=rank_order, channel_binding=binding, name='random')
    violations = validate_tree(tree)
    if violations:
        raise FieldSpecError("Generated an invalid taxonomy: {}".format(violations[0].message))
    return tree
