#
# taxoseg documentation build configuration file
#
import sys
import os

sys.path.insert(0, os.path.abspath('..'))
from taxoseg import __version__

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.coverage',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'taxoseg'
copyright = '2024, taxoseg contributors'

version = __version__
release = __version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

import sphinx_rtd_theme
html_theme = "sphinx_rtd_theme"
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]

htmlhelp_basename = 'taxosegdoc'

latex_elements = {
}
latex_documents = [
    ('index', 'taxoseg.tex', 'taxoseg Documentation',
     'taxoseg contributors', 'manual'),
]

man_pages = [
    ('index', 'taxoseg', 'taxoseg Documentation',
     ['taxoseg contributors'], 1)
]

autodoc_default_options = {
    'members': True,
}
