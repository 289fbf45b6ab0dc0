"""Link-graph random walks for word relatedness and entity disambiguation."""

from .dictionary import Candidate, DictEntry, Dictionary, SqliteDictionary, normalize_mention
from .errors import DataError
from .graph import NodeTable, TypedGraph, filter_reciprocal, merge, stats, to_undirected
from .ned import NedPrediction, NedQuery, disambiguate, mfs_baseline, ngd_disambiguate
from .ppr import NoContextError, PprParams, ScoreVector, build_teleport, run_ppr, truncate_ppv
from .relatedness import UnknownTermError, combine_scores, ngd_relatedness, relate

__version__ = "0.1.0"

__all__ = [
    "Candidate", "DictEntry", "Dictionary", "SqliteDictionary", "normalize_mention",
    "DataError",
    "NodeTable", "TypedGraph", "filter_reciprocal", "merge", "stats", "to_undirected",
    "NedPrediction", "NedQuery", "disambiguate", "mfs_baseline", "ngd_disambiguate",
    "NoContextError", "PprParams", "ScoreVector", "build_teleport", "run_ppr", "truncate_ppv",
    "UnknownTermError", "combine_scores", "ngd_relatedness", "relate",
    "__version__",
]
