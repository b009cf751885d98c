"""
Test fixtures
"""

# Two genera, no misc leaf. Channel order a1, a2, b1.
TWO_GENUS_TAXONOMY = {
    "name": "two-genus",
    "rank_order": ["leaf", "genus", "root"],
    "nodes": [
        {"id": "root", "display_name": "Root", "rank": "root", "parent": None},
        {"id": "A", "display_name": "Genus A", "rank": "genus", "parent": "root"},
        {"id": "B", "display_name": "Genus B", "rank": "genus", "parent": "root"},
        {"id": "a1", "display_name": "A one", "rank": "leaf", "parent": "A"},
        {"id": "a2", "display_name": "A two", "rank": "leaf", "parent": "A"},
        {"id": "b1", "display_name": "B one", "rank": "leaf", "parent": "B"},
    ],
    "channel_binding": ["a1", "a2", "b1"],
}

# misc and an unknown leaf hang directly under the root.
# Channel order misc, a1, a2, b1, b2, other.
MISC_TAXONOMY = {
    "name": "misc-fixture",
    "rank_order": ["leaf", "genus", "root"],
    "nodes": [
        {"id": "root", "display_name": "Root", "rank": "root", "parent": None},
        {"id": "A", "display_name": "Genus A", "rank": "genus", "parent": "root"},
        {"id": "B", "display_name": "Genus B", "rank": "genus", "parent": "root"},
        {"id": "a1", "display_name": "A one", "rank": "leaf", "parent": "A"},
        {"id": "a2", "display_name": "A two", "rank": "leaf", "parent": "A"},
        {"id": "b1", "display_name": "B one", "rank": "leaf", "parent": "B"},
        {"id": "b2", "display_name": "B two", "rank": "leaf", "parent": "B"},
        {"id": "misc", "display_name": "Non-vegetation", "rank": "leaf", "parent": "root"},
        {"id": "other", "display_name": "Unknown", "rank": "leaf", "parent": "root"},
    ],
    "channel_binding": ["misc", "a1", "a2", "b1", "b2", "other"],
    "misc": "misc",
    "unknown": ["other"],
}

# Binding order differs from declaration order so that ties follow channels
SHUFFLED_TAXONOMY = {
    "rank_order": ["leaf", "genus", "root"],
    "nodes": [
        {"id": "root", "rank": "root", "parent": None},
        {"id": "A", "rank": "genus", "parent": "root"},
        {"id": "B", "rank": "genus", "parent": "root"},
        {"id": "a1", "rank": "leaf", "parent": "A"},
        {"id": "b1", "rank": "leaf", "parent": "B"},
    ],
    "channel_binding": ["b1", "a1"],
}

FIELD_SPEC = {
    "name": "field",
    "taxonomy": "species",
    "seed": 7,
    "height": 48,
    "width": 64,
    "blobs": [
        {"leaf": "ZEAMX", "center": [12, 14], "radius": 9},
        {"leaf": "ECHCG", "center": [30, 44], "radius": 10},
        {"leaf": "AMARE", "center": [34, 14], "radius": 7},
        {"leaf": "SETVE", "center": [10, 48], "radius": 6},
    ],
    "flip_prob": 0.0,
}

# Same layout and seed as FIELD_SPEC with a fifth of the pixels flipped
NOISY_FIELD_SPEC = dict(FIELD_SPEC, name="noisy", flip_prob=0.2)

# One vegetation disc on a small field. With no flips the predictions reproduce this
# mask exactly, so the report depends only on the disc geometry.
GOLDEN_FIELD_SPEC = {
    "name": "golden",
    "taxonomy": "vegetation",
    "seed": 7,
    "height": 24,
    "width": 32,
    "blobs": [{"leaf": "vegetation", "center": [10, 12], "radius": 6}],
    "flip_prob": 0.0,
}

# The annotator drew the same disc two rows down and four columns right
GOLDEN_ANNOTATION_SPEC = dict(GOLDEN_FIELD_SPEC, blobs=[{"leaf": "vegetation", "center": [12, 16], "radius": 6}])
