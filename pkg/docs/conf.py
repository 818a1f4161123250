# Sphinx configuration for the lccmatch documentation.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys
sys.path.insert(0, os.path.abspath('..'))


project = 'lccmatch'
copyright = '2026, the lccmatch developers'
author = 'the lccmatch developers'


extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
    # Renders README.md and the other Markdown pages
    'myst_parser',
]

# The modules document themselves in order: types first, then operations.
autodoc_member_order = 'bysource'
autodoc_typehints = 'description'

templates_path = ['_templates']
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']


html_theme = 'alabaster'
html_static_path = ['_static']
