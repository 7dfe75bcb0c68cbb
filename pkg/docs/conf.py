#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# lutlm documentation build configuration file

import os
import sys
sys.path.insert(0, os.path.abspath('..'))

import lutlm

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode', 'sphinx.ext.napoleon']
autodoc_mock_imports = ['bokeh', 'astropy', 'scipy', 'click']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'lutlm'
copyright = u"2026, Joe Filippazzo"
author = u"Joe Filippazzo"
version = lutlm.__version__
release = lutlm.__version__

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'

html_theme = 'alabaster'
html_static_path = ['_static']
htmlhelp_basename = 'lutlmdoc'

man_pages = [(master_doc, 'lutlm', u'lutlm Documentation', [author], 1)]
