"""Sphinx configuration file for the package.

This configuration only affects single-package Sphinx documentation builds.
"""

import mbrec  # type: ignore # noqa
from documenteer.conf.pipelinespkg import *  # type: ignore # noqa

project = "mbrec"
html_theme_options["logotext"] = project  # type: ignore # noqa
html_title = project
html_short_title = project
doxylink = {}  # type: ignore # noqa

extensions = [
    "sphinx_automodapi.automodapi",
]
