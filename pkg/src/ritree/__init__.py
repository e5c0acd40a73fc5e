"""Random Indexing K-tree: incremental document clustering over randomly
indexed vectors."""

from .exceptions import RiTreeError
from .kmeans import KMeansConfig, Partition, run_with_restarts
from .ktree import KTree
from .randindex import IndexVectorRegistry, RandomIndexer, RiConfig
from .represent import BM25Params, BM25Vectorizer, TfidfCuller

__all__ = [
    "BM25Params",
    "BM25Vectorizer",
    "IndexVectorRegistry",
    "KMeansConfig",
    "KTree",
    "Partition",
    "RandomIndexer",
    "RiConfig",
    "RiTreeError",
    "TfidfCuller",
    "run_with_restarts",
]

__version__ = "0.1.0"
