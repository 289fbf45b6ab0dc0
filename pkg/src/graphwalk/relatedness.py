"""Relatedness: walk-vector cosine, shared-inlink baseline, score combination."""

from __future__ import annotations

import math

import numpy as np

from .graph import TypedGraph
from .ppr import PprParams, ScoreVector, build_teleport, run_ppr, truncate_ppv


class UnknownTermError(LookupError):
    """A query term has no dictionary entry."""

    def __init__(self, term: str):
        super().__init__(f"term not in dictionary: {term!r}")
        self.term = term


def cosine(a: ScoreVector, b: ScoreVector) -> float:
    """Cosine of two sparse vectors; zero vectors compare as 0."""
    na, nb = a.norm(), b.norm()
    if na == 0.0 or nb == 0.0:
        return 0.0
    return min(1.0, a.dot(b) / (na * nb))


def term_ppv(term: str, graph: TypedGraph, store, params: PprParams) -> ScoreVector:
    """Truncated walk vector for a single term used as the only mention."""
    entry = store.lookup(term)
    if entry is None:
        raise UnknownTermError(term)
    teleport = build_teleport([entry], graph.n_nodes, params.prior_init)
    return truncate_ppv(run_ppr(graph, teleport, params), params.k)


def relate(term1: str, term2: str, graph: TypedGraph, store,
           params: PprParams | None = None) -> float:
    """Relatedness in [0,1] as the cosine of the two terms' walk vectors."""
    params = params or PprParams()
    return cosine(term_ppv(term1, graph, store, params),
                  term_ppv(term2, graph, store, params))


def ngd_relatedness(a: int, b: int, graph: TypedGraph) -> float:
    """Shared in-link relatedness between two articles.

    distance = (log max(|A|,|B|) - log |A&B|) / (log W - log min(|A|,|B|))
    with A, B the in-neighbor sets and W the non-isolated node count; the
    score is max(0, 1 - distance). Logs are base-2 (the ratio is
    base-invariant). Empty sets or an empty intersection score 0.
    """
    ina = graph.in_neighbors_of(a)
    inb = graph.in_neighbors_of(b)
    size_a, size_b = len(ina), len(inb)
    if size_a == 0 or size_b == 0:
        return 0.0
    inter = int(np.intersect1d(ina, inb, assume_unique=True).size)
    if inter == 0:
        return 0.0
    num = math.log2(max(size_a, size_b)) - math.log2(inter)
    if num <= 0.0:
        return 1.0
    den = math.log2(graph.non_isolated_count()) - math.log2(min(size_a, size_b))
    if den <= 0.0:
        return 0.0
    return max(0.0, 1.0 - num / den)


def ngd_relate(term1: str, term2: str, graph: TypedGraph, store) -> float:
    """Term-level baseline: maximum pairwise article relatedness.

    Priors are deliberately not folded in; they hurt this baseline.
    """
    e1 = store.lookup(term1)
    if e1 is None:
        raise UnknownTermError(term1)
    e2 = store.lookup(term2)
    if e2 is None:
        raise UnknownTermError(term2)
    return max(ngd_relatedness(c1.article, c2.article, graph)
               for c1 in e1.candidates for c2 in e2.candidates)


def combine_scores(r1: float, r2: float) -> float:
    """Combine two relatedness scores from independent sources by product."""
    if not (0.0 <= r1 <= 1.0 and 0.0 <= r2 <= 1.0):
        raise ValueError(f"scores must be in [0,1], got {r1}, {r2}")
    return r1 * r2


def score_pairs(pairs, graph: TypedGraph, store, params: PprParams,
                system: str = "ppr", on_unknown: str = "skip"):
    """Score (term1, term2, gold) rows; returns (term1, term2, gold, score).

    Unknown terms either drop the pair (``skip``, score None) or score it 0
    (``zero``), selected by the evaluation caller.
    """
    if system not in ("ppr", "ngd"):
        raise ValueError(f"unknown relatedness system {system!r}")
    if on_unknown not in ("skip", "zero"):
        raise ValueError(f"on_unknown must be 'skip' or 'zero', got {on_unknown!r}")
    out = []
    for term1, term2, gold in pairs:
        try:
            if system == "ppr":
                score = relate(term1, term2, graph, store, params)
            else:
                score = ngd_relate(term1, term2, graph, store)
        except UnknownTermError:
            score = 0.0 if on_unknown == "zero" else None
        out.append((term1, term2, gold, score))
    return out
