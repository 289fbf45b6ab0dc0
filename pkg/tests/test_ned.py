from __future__ import annotations

import json

import numpy as np
import pytest

import graphwalk as gw
from graphwalk.dictionary import Candidate, Dictionary
from graphwalk.graph import NodeTable
from graphwalk.ned import (CachedHttpResolver, NedQuery, disambiguate,
                           extract_context, generate_candidates, load_queries,
                           mfs_baseline, ngd_disambiguate, run_batch,
                           write_predictions)
from graphwalk.ppr import PprParams


@pytest.fixture()
def cascade_dict():
    return Dictionary.from_counts({
        "smith": {1: 6, 2: 3},
        "white house": {3: 9},
        "john smith": {1: 4},
        "gotham": {10: 32, 11: 15, 12: 35, 13: 1, 14: 1},
    })


def test_parenthetical_stripped_before_lookup(cascade_dict):
    entry = generate_candidates("Smith (politician)", cascade_dict)
    assert entry.mention == "smith"


def test_leading_the_dropped_on_miss(cascade_dict):
    entry = generate_candidates("The White House", cascade_dict)
    assert entry.mention == "white house"


def test_middle_token_dropped_for_three_token_mentions(cascade_dict):
    entry = generate_candidates("John Q Smith", cascade_dict)
    assert entry.mention == "john smith"


def test_direct_hit_stops_the_cascade(cascade_dict):
    entry = generate_candidates("john smith", cascade_dict)
    assert entry.mention == "john smith"


def test_all_heuristics_fail(cascade_dict):
    assert generate_candidates("Completely Unknown Thing Here", cascade_dict) is None


class OneShotResolver:
    def __init__(self, answer):
        self.answer = answer
        self.calls = []

    def resolve(self, mention):
        self.calls.append(mention)
        return self.answer


def test_remote_resolver_is_last_resort(cascade_dict):
    nodes = NodeTable(["Pad"] * 0 + [f"T{i}" for i in range(20)],
                      np.zeros(20, dtype=np.uint8))
    resolver = OneShotResolver("T7")
    entry = generate_candidates("Mystery Entity", cascade_dict, resolver, nodes)
    assert entry.candidates == (Candidate(7, 0, 1.0),)
    assert resolver.calls == ["Mystery Entity"]
    # not consulted when the dictionary already answers
    resolver.calls.clear()
    generate_candidates("gotham", cascade_dict, resolver, nodes)
    assert resolver.calls == []


def test_resolver_title_outside_nodes_fails(cascade_dict):
    nodes = NodeTable(["Only"], np.zeros(1, dtype=np.uint8))
    entry = generate_candidates("Mystery", cascade_dict,
                                OneShotResolver("Elsewhere"), nodes)
    assert entry is None


# --- context extraction ------------------------------------------------------

def test_short_document_scans_everything(cascade_dict):
    tokens = ("we", "saw", "the", "white", "house", "today")
    q = NedQuery("q", "gotham", tokens, 1)
    entries = extract_context(q, cascade_dict)
    assert [e.mention for e in entries] == ["white house"]


def test_no_matches_gives_empty_context(cascade_dict):
    q = NedQuery("q", "gotham", ("nothing", "relevant", "here"), 1)
    assert extract_context(q, cascade_dict) == []


def test_target_span_is_excluded(cascade_dict):
    tokens = ("john", "smith", "met", "smith")
    q = NedQuery("q", "John Smith", tokens, 0)
    entries = extract_context(q, cascade_dict)
    # only the trailing single "smith" remains
    assert [e.mention for e in entries] == ["smith"]


def test_window_is_clipped_to_50_each_side(cascade_dict):
    # "white house" at positions 0-1, target at 52: outside the 50-token window
    tokens = tuple(["white", "house"] + ["filler"] * 58)
    q_far = NedQuery("q", "x", tokens, 52)
    assert extract_context(q_far, cascade_dict) == []
    # at positions 10-11 with the target at 60 it sits exactly on the edge
    tokens = tuple(["filler"] * 10 + ["white", "house"] + ["filler"] * 48
                   + ["x"] + ["filler"] * 60)
    q_near = NedQuery("q", "x", tokens, 60)
    assert [e.mention for e in extract_context(q_near, cascade_dict)] == ["white house"]


# --- disambiguation ----------------------------------------------------------

def test_single_candidate_wins_regardless_of_walk(lions):
    graph, store, nodes, _ = lions
    tokens = tuple("met fletcher in cape town".split())
    q = NedQuery("q", "Alan Kourie", tokens, 0)
    pred = disambiguate(q, graph, store)
    assert pred.predicted == 2
    assert not pred.fallback_used


def test_empty_context_falls_back_to_prior(lions):
    graph, store, nodes, _ = lions
    q = NedQuery("q", "Lions", ("the", "lions", "won"), 1)
    pred = disambiguate(q, graph, store)
    assert pred.predicted == 0  # highest prior
    assert pred.fallback_used


def test_no_candidates_predicts_nil(lions):
    graph, store, nodes, _ = lions
    q = NedQuery("q", "Zzqx", ("some", "zzqx", "mention"), 1)
    pred = disambiguate(q, graph, store)
    assert pred.predicted is None
    assert pred.candidate_scores == ()


def test_walk_flips_the_ambiguous_mention(lions):
    graph, store, nodes, query = lions
    pred = disambiguate(query, graph, store, PprParams(iterations=15, k=None))
    assert nodes.title_of(pred.predicted) == "Highveld_Lions"
    direct = ngd_disambiguate(query, graph, store)
    assert nodes.title_of(direct.predicted) == "B&I_Lions"
    prior_only = mfs_baseline(query, store)
    assert nodes.title_of(prior_only.predicted) == "B&I_Lions"


def test_prediction_always_among_candidates(lions):
    graph, store, nodes, query = lions
    candidates = {c.article for c in store.lookup(query.mention).candidates}
    for params in (PprParams(iterations=1, k=None), PprParams(iterations=30, k=None),
                   PprParams(iterations=15, k=None, prior_init=False)):
        pred = disambiguate(query, graph, store, params)
        assert pred.predicted in candidates
        assert {a for a, _ in pred.candidate_scores} == candidates


def test_scores_sorted_descending(lions):
    graph, store, nodes, query = lions
    pred = disambiguate(query, graph, store)
    scores = [s for _, s in pred.candidate_scores]
    assert scores == sorted(scores, reverse=True)


def test_context_only_teleport_flag(lions):
    graph, store, nodes, query = lions
    with_target = disambiguate(query, graph, store, include_target=True)
    without = disambiguate(query, graph, store, include_target=False)
    assert with_target.predicted == without.predicted == 1
    assert with_target.candidate_scores != without.candidate_scores


# --- direct-link baseline ----------------------------------------------------

def test_ngd_no_monosemous_context_reduces_to_prior(lions):
    graph, store, nodes, _ = lions
    # "fletcher" is ambiguous, so nothing contributes to the link score
    q = NedQuery("q", "Lions", ("lions", "and", "fletcher"), 0)
    pred = ngd_disambiguate(q, graph, store)
    assert pred.predicted == 0
    assert pred.fallback_used


def test_ngd_single_candidate(lions):
    graph, store, nodes, _ = lions
    q = NedQuery("q", "Cape Town", ("cape", "town", "with", "fletcher"), 0)
    pred = ngd_disambiguate(q, graph, store)
    assert pred.predicted == 5


def test_ngd_shared_inlinker_wins():
    # candidate 0 shares an in-linking article with the context article 3;
    # candidate 1 shares none
    pairs = [(0, 2), (3, 2), (1, 4), (3, 5)]
    src = [a for a, b in pairs] + [b for a, b in pairs]
    dst = [b for a, b in pairs] + [a for a, b in pairs]
    g = gw.TypedGraph.from_arcs(6, src, dst)
    d = Dictionary.from_counts({"amb": {0: 5, 1: 5}, "ctx": {3: 3}})
    q = NedQuery("q", "amb", ("amb", "near", "ctx"), 0)
    pred = ngd_disambiguate(q, g, d)
    assert pred.predicted == 0
    assert pred.candidate_scores[0][1] > 0
    # hand check against the formula
    want = 0.5 * naive_score(pairs, 0, 3, 6)
    assert pred.candidate_scores[0][1] == pytest.approx(want)


def naive_score(pairs, a, b, n):
    from conftest import naive_ngd_score
    arcs = set(pairs) | {(y, x) for x, y in pairs}
    return naive_ngd_score(arcs, a, b, n)


# --- most-frequent-sense baseline --------------------------------------------

def test_mfs_picks_highest_prior(cascade_dict):
    q = NedQuery("q", "Gotham", ("gotham", "at", "night"), 0)
    pred = mfs_baseline(q, cascade_dict)
    assert pred.predicted == 12  # count 35 of 84


def test_mfs_tie_breaks_to_lower_id():
    d = Dictionary.from_counts({"m": {9: 5, 4: 5}})
    pred = mfs_baseline(NedQuery("q", "m", ("m",), 0), d)
    assert pred.predicted == 4


def test_mfs_nil_when_unknown(cascade_dict):
    pred = mfs_baseline(NedQuery("q", "zzqx", ("zzqx",), 0), cascade_dict)
    assert pred.predicted is None


# --- zero-iteration reduction ------------------------------------------------

def test_zero_iterations_with_priors_reduces_to_mfs(lions):
    graph, store, nodes, query = lions
    walk = disambiguate(query, graph, store, PprParams(iterations=0, k=None))
    prior = mfs_baseline(query, store)
    assert walk.predicted == prior.predicted


# --- batching ----------------------------------------------------------------

def test_run_batch_is_worker_count_invariant(lions):
    graph, store, nodes, query = lions
    queries = []
    for i in range(24):
        mention = ("Lions", "Fletcher", "Cape Town")[i % 3]
        tokens = tuple(f"q{i}".split()) + query.context_tokens
        queries.append(NedQuery(f"q{i}", mention, tokens,
                                list(tokens).index("lions") if i % 3 == 0 else 0))
    serial = run_batch(queries, graph, store, workers=1)
    threaded = run_batch(queries, graph, store, workers=8)
    assert serial == threaded
    assert [p.query_id for p in serial] == [q.query_id for q in queries]


def test_run_batch_rejects_unknown_system(lions):
    graph, store, nodes, query = lions
    with pytest.raises(ValueError):
        run_batch([query], graph, store, system="oracle")


# --- IO ----------------------------------------------------------------------

def test_load_queries_and_offsets(tmp_path):
    ctx = tmp_path / "doc1.txt"
    ctx.write_text("Alan Kourie spoke about the Lions in Cape Town", encoding="utf-8")
    tsv = tmp_path / "queries.tsv"
    tsv.write_text(
        "query_id\tmention\tcontext_file\tchar_offset\tgold_title\n"
        "q1\tLions\tdoc1.txt\t28\tHighveld_Lions\n"
        "q2\tLions\tdoc1.txt\t\t\n"
        "q3\tCape Town\tdoc1.txt\n",
        encoding="utf-8")
    queries = load_queries(str(tsv))
    assert queries[0].target_index == 5
    assert queries[0].gold_title == "Highveld_Lions"
    assert queries[1].target_index == 5  # found by scanning
    assert queries[1].gold_title is None
    assert queries[2].target_index == 7
    assert queries[2].mention == "Cape Town"


def test_load_queries_missing_context_errors(tmp_path):
    tsv = tmp_path / "queries.tsv"
    tsv.write_text("query_id\tmention\tcontext_file\nq1\tX\tmissing.txt\n",
                   encoding="utf-8")
    with pytest.raises(gw.DataError):
        load_queries(str(tsv))


def test_write_predictions_format(tmp_path, lions):
    graph, store, nodes, query = lions
    preds = run_batch([query], graph, store)
    nil = run_batch([NedQuery("q2", "Zzqx", ("zzqx",), 0)], graph, store)
    path = tmp_path / "preds.tsv"
    write_predictions(preds + nil, nodes, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "query_id\tpredicted_title\tscore\tfallback_used"
    assert lines[1].startswith("lions-1\tHighveld_Lions\t")
    assert lines[2] == "q2\tNIL\t0\tfalse"


# --- remote resolver ---------------------------------------------------------

def test_cached_resolver_caches_and_degrades(tmp_path, monkeypatch):
    cache = tmp_path / "cache.json"
    resolver = CachedHttpResolver("http://example.invalid/search?q={query}",
                                  str(cache), min_interval=0.0)
    answers = {"Alpha": "Alpha_Page"}
    calls = []

    def fake_fetch(mention):
        calls.append(mention)
        return answers.get(mention)

    monkeypatch.setattr(resolver, "_fetch", fake_fetch)
    assert resolver.resolve("Alpha") == "Alpha_Page"
    assert resolver.resolve("Alpha") == "Alpha_Page"
    assert calls == ["Alpha"]  # second hit served from cache
    assert resolver.resolve("Beta") is None  # failure degrades to no title
    assert json.loads(cache.read_text()) == {"Alpha": "Alpha_Page", "Beta": None}
    # a fresh instance reuses the on-disk cache
    resolver2 = CachedHttpResolver("http://example.invalid/{query}", str(cache),
                                   min_interval=0.0)
    monkeypatch.setattr(resolver2, "_fetch", lambda m: pytest.fail("not cached"))
    assert resolver2.resolve("Alpha") == "Alpha_Page"


def test_resolver_network_failure_returns_none(tmp_path):
    resolver = CachedHttpResolver("http://127.0.0.1:1/nothing?q={query}",
                                  str(tmp_path / "c.json"), timeout=0.2,
                                  min_interval=0.0)
    assert resolver.resolve("anything") is None
