# Sphinx configuration for the alfeld-stress API reference.
import os
import sys

sys.path.insert(0, os.path.abspath('..'))

project = 'alfeld-stress'
copyright = '2024, aleksvoit'
author = 'aleksvoit'
release = '0.1.0'

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.mathjax']

autodoc_member_order = 'bysource'
autodoc_mock_imports = ['sympy']

templates_path = ['_templates']
exclude_patterns = ['_build']

html_theme = 'nature'
