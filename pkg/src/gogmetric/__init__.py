"""Lipschitz metrics on deformation spaces of graphs of groups."""
from .errors import *  # noqa: F401,F403
from .gog import GraphOfGroups, parse_gog, validate
from .words import Word, parse_word, format_word, reduce_word, translation_length

__version__ = "0.1.0"
