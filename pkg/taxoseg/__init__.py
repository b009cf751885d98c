"""
taxoseg
^^^^^^^

Taxonomy-aware inference and evaluation for plant and damage segmentation maps

"""

__author__ = "taxoseg developers"
__license__ = "MIT"
__version__ = "0.4.0"
