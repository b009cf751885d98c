"""
Taxonomy files shipped with taxoseg, loaded by :func:`taxoseg.taxonomy.load_bundled_taxonomy`
"""
