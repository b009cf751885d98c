"""
Label taxonomies: parsing, validation and rank queries
"""
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from importlib.resources import files as _resource_files
from pathlib import Path
from types import MappingProxyType
from typing import Any
from typing import Dict
from typing import FrozenSet
from typing import Iterable
from typing import List
from typing import Mapping
from typing import NamedTuple
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from taxoseg._schema import NodeSchema
from taxoseg._schema import TaxonomyFileSchema
from taxoseg._util import PathLike
from taxoseg._util import canonical_json
from taxoseg._util import sha256_text
from taxoseg.constants import CHANNEL_BINDING
from taxoseg.constants import DEFAULT_ENCODING
from taxoseg.constants import DISPLAY_NAME
from taxoseg.constants import MAX_LEAF_CHANNELS
from taxoseg.constants import MISC
from taxoseg.constants import MISC_LEAF_ID
from taxoseg.constants import NAME
from taxoseg.constants import NODE_ID
from taxoseg.constants import NODES
from taxoseg.constants import PARENT
from taxoseg.constants import RANK
from taxoseg.constants import RANK_ORDER
from taxoseg.constants import UNKNOWN
from taxoseg.exceptions import TaxonomyError
from taxoseg.exceptions import UnknownNodeError
from taxoseg.exceptions import UnknownRankError

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())


@dataclass(frozen=True)
class TaxonNode:
    """
    A single node of a taxonomy.

    :param id: unique identifier, e.g. an EPPO code such as ``ECHCG`` or a damage type such as ``necrosis``
    :param display_name: human readable label
    :param rank: one of the tree's declared ranks
    :param parent_id: id of the parent node, ``None`` only for the root
    """
    id: str
    display_name: str
    rank: str
    parent_id: Optional[str]


class Violation(NamedTuple):
    kind: str
    node_id: Optional[str]
    message: str


class TaxonomyTree(object):
    """
    A rooted tree of taxon nodes whose leaves are bound to probability channels.

    Construction does not validate; use :func:`parse_taxonomy` for checked input
    or :func:`validate_tree` for an explicit report. Instances are never mutated
    after construction, so they can be shared between workers.
    """

    def __init__(
        self,
        nodes: Mapping[str, TaxonNode],
        rank_order: Sequence[str],
        channel_binding: Sequence[str],
        misc_id: Optional[str] = None,
        unknown_leaf_ids: Iterable[str] = (),
        name: Optional[str] = None,
    ) -> None:
        self._nodes: Dict[str, TaxonNode] = dict(nodes)
        self._rank_order = tuple(rank_order)
        self._channel_binding = tuple(channel_binding)
        self._misc_id = misc_id
        self._unknown_leaf_ids = frozenset(unknown_leaf_ids)
        self.name = name
        self._rank_index = {rank: index for index, rank in enumerate(self._rank_order)}
        self._children: Dict[str, List[str]] = {node_id: [] for node_id in self._nodes}
        for node in self._nodes.values():
            if node.parent_id is not None and node.parent_id in self._children:
                self._children[node.parent_id].append(node.id)
        self._channel_of: Dict[str, int] = {}
        for channel, leaf_id in enumerate(self._channel_binding):
            self._channel_of.setdefault(leaf_id, channel)
        self._leaves_cache: Dict[str, FrozenSet[str]] = {}
        self._ancestor_cache: Dict[Tuple[str, str], str] = {}
        self._projection_cache: Dict[str, Tuple[Tuple[str, ...], np.ndarray]] = {}

    def __repr__(self) -> str:
        return "TaxonomyTree<{}: {} nodes, {} channels>".format(
            self.name or 'unnamed', len(self._nodes), len(self._channel_binding))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TaxonomyTree):
            return NotImplemented
        return (
            self._nodes == other._nodes
            and self._rank_order == other._rank_order
            and self._channel_binding == other._channel_binding
            and self._misc_id == other._misc_id
            and self._unknown_leaf_ids == other._unknown_leaf_ids
            and self.name == other.name
        )

    def __hash__(self) -> int:
        return hash(self.content_hash)

    @property
    def nodes(self) -> Mapping[str, TaxonNode]:
        return MappingProxyType(self._nodes)

    @property
    def rank_order(self) -> Tuple[str, ...]:
        """
        Rank names from leaf to root
        """
        return self._rank_order

    @property
    def leaf_rank(self) -> str:
        return self._rank_order[0]

    @property
    def root_rank(self) -> str:
        return self._rank_order[-1]

    @property
    def channel_binding(self) -> Tuple[str, ...]:
        """
        Leaf ids in probability channel order
        """
        return self._channel_binding

    @property
    def num_channels(self) -> int:
        return len(self._channel_binding)

    @property
    def misc_id(self) -> Optional[str]:
        return self._misc_id

    @property
    def misc_channel(self) -> Optional[int]:
        if self._misc_id is None:
            return None
        return self._channel_of.get(self._misc_id)

    @property
    def unknown_leaf_ids(self) -> FrozenSet[str]:
        return self._unknown_leaf_ids

    @cached_property
    def root_id(self) -> str:
        roots = sorted(node.id for node in self._nodes.values() if node.parent_id is None)
        if len(roots) != 1:
            raise TaxonomyError("Taxonomy must have exactly one root, found {}".format(roots or 'none'))
        return roots[0]

    @cached_property
    def content_hash(self) -> str:
        """
        SHA-256 of the canonical serialization
        """
        return sha256_text(serialize_taxonomy(self))

    def _require(self, node_id: str) -> TaxonNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError("Unknown taxonomy node '{}'".format(node_id), node_id=node_id) from None

    def rank_index(self, rank: str) -> int:
        try:
            return self._rank_index[rank]
        except KeyError:
            raise UnknownRankError("Unknown taxonomy rank '{}'".format(rank)) from None

    def is_leaf(self, node_id: str) -> bool:
        self._require(node_id)
        return not self._children[node_id]

    @cached_property
    def leaf_ids(self) -> FrozenSet[str]:
        return frozenset(node_id for node_id, kids in self._children.items() if not kids)

    def channel_of(self, leaf_id: str) -> int:
        """
        Returns the probability channel bound to `leaf_id`
        """
        self._require(leaf_id)
        try:
            return self._channel_of[leaf_id]
        except KeyError:
            raise TaxonomyError("Node '{}' is not bound to a channel".format(leaf_id), node_id=leaf_id) from None

    def first_channel(self, node_id: str) -> int:
        """
        Lowest channel index among the leaves under `node_id`; this is the tie-break key.
        """
        channels = [self._channel_of[leaf] for leaf in self.leaves_under(node_id) if leaf in self._channel_of]
        return min(channels) if channels else len(self._channel_binding)

    def parent(self, node_id: str) -> Optional[str]:
        return self._require(node_id).parent_id

    def children(self, node_id: str) -> Tuple[str, ...]:
        """
        Children of `node_id` in tie-break order (lowest first channel first)
        """
        self._require(node_id)
        return tuple(sorted(self._children[node_id], key=lambda child: (self.first_channel(child), child)))

    def path_to_root(self, node_id: str) -> Tuple[str, ...]:
        """
        Node ids from `node_id` up to the root, both included
        """
        path = [self._require(node_id).id]
        seen = {node_id}
        parent_id = self._nodes[node_id].parent_id
        while parent_id is not None and parent_id in self._nodes:
            if parent_id in seen:
                raise TaxonomyError("Cycle through node '{}'".format(parent_id), node_id=parent_id)
            seen.add(parent_id)
            path.append(parent_id)
            parent_id = self._nodes[parent_id].parent_id
        return tuple(path)

    def leaves_under(self, node_id: str) -> FrozenSet[str]:
        """
        Exact set of leaf descendants of `node_id`; a leaf maps to itself.
        """
        self._require(node_id)
        cached = self._leaves_cache.get(node_id)
        if cached is not None:
            return cached
        leaves = set()
        stack = [node_id]
        visited = set()
        while stack:
            current = stack.pop()
            if current in visited:
                continue
            visited.add(current)
            kids = self._children[current]
            if kids:
                stack.extend(kids)
            else:
                leaves.add(current)
        result = frozenset(leaves)
        self._leaves_cache[node_id] = result
        return result

    def ancestor_at_rank(self, leaf_id: str, rank: str) -> str:
        """
        Projects `leaf_id` to `rank`.

        Returns the most general node on the leaf-to-root path whose rank is not above
        `rank`. On a complete path that is the unique ancestor carrying `rank`; when the
        path skips `rank` (``misc`` hangs directly under the root) the projection stops
        at the last node below it.
        """
        key = (leaf_id, rank)
        cached = self._ancestor_cache.get(key)
        if cached is not None:
            return cached
        self._require(leaf_id)
        if self._children[leaf_id]:
            raise UnknownNodeError("Node '{}' is not a leaf".format(leaf_id), node_id=leaf_id)
        target = self.rank_index(rank)
        result = leaf_id
        for node_id in self.path_to_root(leaf_id)[1:]:
            if self.rank_index(self._nodes[node_id].rank) > target:
                break
            result = node_id
        self._ancestor_cache[key] = result
        return result

    def _projection(self, rank: str) -> Tuple[Tuple[str, ...], np.ndarray]:
        cached = self._projection_cache.get(rank)
        if cached is not None:
            return cached
        targets = [self.ancestor_at_rank(leaf_id, rank) for leaf_id in self._channel_binding]
        ordered = tuple(dict.fromkeys(targets))
        position = {node_id: index for index, node_id in enumerate(ordered)}
        table = np.array([position[node_id] for node_id in targets], dtype=np.intp)
        table.setflags(write=False)
        self._projection_cache[rank] = (ordered, table)
        log.debug("%r projects %d channels to %d %s classes", self, len(targets), len(ordered), rank)
        return ordered, table

    def rank_nodes(self, rank: str) -> Tuple[str, ...]:
        """
        Distinct projections of the bound leaves at `rank`, ordered by lowest channel
        """
        return self._projection(rank)[0]

    def projection(self, rank: str) -> np.ndarray:
        """
        Read-only table mapping each leaf channel to its class index in :meth:`rank_nodes`
        """
        return self._projection(rank)[1]

    def display_name(self, node_id: str) -> str:
        return self._require(node_id).display_name


def validate_tree(tree: TaxonomyTree) -> List[Violation]:
    """
    Checks every taxonomy invariant and returns one entry per violation.
    """
    violations: List[Violation] = []
    nodes = tree.nodes
    rank_order = tree.rank_order
    rank_index = {rank: index for index, rank in enumerate(rank_order)}

    if len(rank_order) < 2:
        violations.append(Violation('rank-order', None, "rank_order needs at least a leaf rank and a root rank"))
    if len(rank_index) != len(rank_order):
        violations.append(Violation('rank-order', None, "rank_order lists a rank more than once"))

    for node in nodes.values():
        if node.rank not in rank_index:
            violations.append(Violation(
                'unknown-rank', node.id, "Node '{}' has undeclared rank '{}'".format(node.id, node.rank)))

    roots = sorted(node.id for node in nodes.values() if node.parent_id is None)
    if not roots:
        violations.append(Violation('no-root', None, "Taxonomy has no root"))
    elif len(roots) > 1:
        violations.append(Violation(
            'multiple-roots', roots[1], "Taxonomy has multiple roots: {}".format(', '.join(roots))))
    for root_id in roots:
        if rank_order and nodes[root_id].rank != rank_order[-1]:
            violations.append(Violation(
                'rank-order', root_id, "Root '{}' must have rank '{}'".format(root_id, rank_order[-1])))

    for node in nodes.values():
        if node.parent_id is not None and node.parent_id not in nodes:
            violations.append(Violation(
                'missing-parent', node.id,
                "Node '{}' references missing parent '{}'".format(node.id, node.parent_id)))

    in_cycle = set()
    for start in sorted(nodes):
        seen = [start]
        parent_id = nodes[start].parent_id
        while parent_id is not None and parent_id in nodes:
            if parent_id in seen:
                cycle = frozenset(seen[seen.index(parent_id):])
                if not cycle & in_cycle:
                    culprit = min(cycle)
                    violations.append(Violation('cycle', culprit, "Cycle through node '{}'".format(culprit)))
                in_cycle |= cycle
                break
            seen.append(parent_id)
            parent_id = nodes[parent_id].parent_id

    has_children = {node.parent_id for node in nodes.values() if node.parent_id is not None}
    for node in nodes.values():
        parent = nodes.get(node.parent_id) if node.parent_id is not None else None
        if parent is not None and node.rank in rank_index and parent.rank in rank_index:
            if rank_index[node.rank] >= rank_index[parent.rank]:
                violations.append(Violation(
                    'rank-order', node.id,
                    "Node '{}' ({}) is not below its parent '{}' ({})".format(
                        node.id, node.rank, parent.id, parent.rank)))
        is_leaf = node.id not in has_children and node.parent_id is not None
        if is_leaf and rank_order and node.rank != rank_order[0]:
            violations.append(Violation(
                'rank-order', node.id, "Leaf '{}' must have rank '{}'".format(node.id, rank_order[0])))
        if not is_leaf and node.parent_id is not None and rank_order and node.rank == rank_order[0]:
            violations.append(Violation(
                'rank-order', node.id, "Internal node '{}' cannot have the leaf rank".format(node.id)))

    leaves = {node.id for node in nodes.values() if node.id not in has_children and node.parent_id is not None}
    bound = set()
    for leaf_id in tree.channel_binding:
        if leaf_id in bound:
            violations.append(Violation(
                'duplicate-channel-binding', leaf_id, "Leaf '{}' is bound to more than one channel".format(leaf_id)))
            continue
        bound.add(leaf_id)
        if leaf_id not in nodes:
            violations.append(Violation(
                'unknown-binding', leaf_id, "Channel binding references unknown node '{}'".format(leaf_id)))
        elif leaf_id not in leaves:
            violations.append(Violation(
                'non-leaf-binding', leaf_id, "Channel binding references non-leaf '{}'".format(leaf_id)))
    for leaf_id in sorted(leaves - bound):
        violations.append(Violation('unbound-leaf', leaf_id, "Leaf '{}' is not bound to a channel".format(leaf_id)))
    if len(tree.channel_binding) > MAX_LEAF_CHANNELS:
        violations.append(Violation(
            'too-many-channels', None,
            "At most {} channels fit an 8-bit label mask".format(MAX_LEAF_CHANNELS)))

    misc_id = tree.misc_id
    if misc_id is not None:
        if misc_id != MISC_LEAF_ID:
            violations.append(Violation('misc', misc_id, "The misc leaf must have id '{}'".format(MISC_LEAF_ID)))
        elif misc_id not in leaves:
            violations.append(Violation('misc', misc_id, "The misc id '{}' is not a leaf".format(misc_id)))

    for unknown_id in sorted(tree.unknown_leaf_ids - leaves):
        violations.append(Violation('unknown-leaf', unknown_id, "Unknown id '{}' is not a leaf".format(unknown_id)))

    return violations


def _require_key(document: Mapping[str, Any], key: str) -> Any:
    try:
        return document[key]
    except KeyError:
        raise TaxonomyError("Taxonomy file is missing key '{}'".format(key)) from None


def parse_taxonomy(text: str) -> TaxonomyTree:
    """
    Parses and validates the contents of a taxonomy file.

    :raises TaxonomyError: with ``node_id`` set to the first offending node
    """
    try:
        document = json.loads(text)
    except ValueError as e:
        raise TaxonomyError("Taxonomy file is not valid JSON: {}".format(e), e) from e
    if not isinstance(document, dict):
        raise TaxonomyError("Taxonomy file must contain a JSON object")

    rank_order = _require_key(document, RANK_ORDER)
    raw_nodes = _require_key(document, NODES)
    channel_binding = _require_key(document, CHANNEL_BINDING)
    if not isinstance(rank_order, list) or not all(isinstance(r, str) for r in rank_order):
        raise TaxonomyError("'{}' must be a list of strings".format(RANK_ORDER))
    if not isinstance(channel_binding, list) or not all(isinstance(c, str) for c in channel_binding):
        raise TaxonomyError("'{}' must be a list of strings".format(CHANNEL_BINDING))
    if not isinstance(raw_nodes, list):
        raise TaxonomyError("'{}' must be a list".format(NODES))

    nodes: Dict[str, TaxonNode] = {}
    for raw in raw_nodes:
        if not isinstance(raw, dict) or not isinstance(raw.get(NODE_ID), str) or not isinstance(raw.get(RANK), str):
            raise TaxonomyError("Every node needs string '{}' and '{}' fields: {!r}".format(NODE_ID, RANK, raw))
        node_id = raw[NODE_ID]
        if node_id in nodes:
            raise TaxonomyError("Duplicate node id '{}'".format(node_id), node_id=node_id)
        parent_id = raw.get(PARENT)
        if parent_id is not None and not isinstance(parent_id, str):
            raise TaxonomyError("Parent of '{}' must be a string or null".format(node_id), node_id=node_id)
        nodes[node_id] = TaxonNode(
            id=node_id,
            display_name=str(raw.get(DISPLAY_NAME, node_id)),
            rank=raw[RANK],
            parent_id=parent_id,
        )

    tree = TaxonomyTree(
        nodes=nodes,
        rank_order=rank_order,
        channel_binding=channel_binding,
        misc_id=document.get(MISC),
        unknown_leaf_ids=document.get(UNKNOWN) or (),
        name=document.get(NAME),
    )
    violations = validate_tree(tree)
    if violations:
        raise TaxonomyError('; '.join(v.message for v in violations), node_id=violations[0].node_id)
    log.debug("Parsed %r", tree)
    return tree


def serialize_taxonomy(tree: TaxonomyTree) -> str:
    """
    Canonical taxonomy file text: nodes sorted by id, keys sorted.
    """
    document = TaxonomyFileSchema(
        rank_order=list(tree.rank_order),
        nodes=[
            NodeSchema(id=node.id, display_name=node.display_name, rank=node.rank, parent=node.parent_id)
            for node in sorted(tree.nodes.values(), key=lambda n: n.id)
        ],
        channel_binding=list(tree.channel_binding),
        misc=tree.misc_id,
        unknown=sorted(tree.unknown_leaf_ids),
    )
    if tree.name is not None:
        document['name'] = tree.name
    return canonical_json(document)


def load_taxonomy(path: PathLike) -> TaxonomyTree:
    return parse_taxonomy(Path(path).read_text(DEFAULT_ENCODING))


def load_bundled_taxonomy(name: str) -> TaxonomyTree:
    """
    Loads one of the shipped taxonomies: ``species``, ``damage`` or ``vegetation``.
    """
    resource = _resource_files('taxoseg.taxonomies').joinpath('{}.json'.format(name))
    if not resource.is_file():
        raise TaxonomyError("No bundled taxonomy named '{}'".format(name))
    return parse_taxonomy(resource.read_text(DEFAULT_ENCODING))


def resolve_taxonomy(ref: PathLike) -> TaxonomyTree:
    """
    Loads `ref` as a file path when it exists, otherwise as a bundled taxonomy name.
    """
    path = Path(ref)
    if path.is_file():
        return load_taxonomy(path)
    return load_bundled_taxonomy(str(ref))
