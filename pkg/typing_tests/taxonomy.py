from __future__ import annotations
from typing import Tuple

from typing_extensions import assert_type


def test_tree_queries() -> None:
    from taxoseg.taxonomy import TaxonomyTree
    from taxoseg.taxonomy import load_bundled_taxonomy

    tree = load_bundled_taxonomy('species')
    assert_type(tree, TaxonomyTree)
    assert_type(tree.ancestor_at_rank('ECHCG', 'genus'), str)
    assert_type(tree.rank_nodes('genus'), Tuple[str, ...])
    assert_type(tree.path_to_root('ECHCG'), Tuple[str, ...])
    assert_type(tree.channel_binding, Tuple[str, ...])


def test_resolve_taxonomy() -> None:
    from pathlib import Path
    from taxoseg.taxonomy import TaxonomyTree
    from taxoseg.taxonomy import resolve_taxonomy

    assert_type(resolve_taxonomy('damage'), TaxonomyTree)
    assert_type(resolve_taxonomy(Path('tree.json')), TaxonomyTree)
