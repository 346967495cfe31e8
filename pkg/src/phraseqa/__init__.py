"""Phrase-indexed question answering over scientific abstracts.

Every 1..5-token span of every abstract sentence is pre-encoded; answering is
maximum inner product search over those vectors, sparse re-ranking of the top
candidates, and sentence-level answer assembly, with a dictionary-based entity
search alongside.
"""

from .config import Settings, load_settings
from .corpus import Corpus, Document, load_corpus
from .service import AskResponse, Engine, build_engine, create_app, load_engine, save_engine

__version__ = "0.1.0"

__all__ = [
    "AskResponse",
    "Corpus",
    "Document",
    "Engine",
    "Settings",
    "__version__",
    "build_engine",
    "create_app",
    "load_corpus",
    "load_engine",
    "load_settings",
    "save_engine",
]
