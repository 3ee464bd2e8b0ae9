"""Sentence splitting, marker detection, grouping, rewriting, dataset assembly."""

import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from citegen.corpus import (
    BuildResult,
    CitationInstance,
    Corpus,
    Document,
    IntentLabel,
    SentenceSpan,
    annotate,
    author_year_key,
    bracket_key,
    build_dataset,
    detect_citations,
    find_markers,
    group_consecutive,
    load_bodies,
    load_dataset_records,
    load_documents,
    load_key_table,
    rewrite_target,
    save_bodies,
    save_dataset,
    save_documents,
    save_key_table,
    split_dataset,
    split_sentences,
)
from citegen.errors import MaxRefsExceeded, SplitTooSmall


def _texts(spans):
    return [s.text for s in spans]


# ---------------------------------------------------------------------------
# Sentence splitting

def test_split_two_plain_sentences():
    assert _texts(split_sentences("A works. B fails.")) == ["A works.", "B fails."]


def test_split_guards_et_al():
    spans = split_sentences("See Smith et al. (2019). Next.")
    assert _texts(spans) == ["See Smith et al. (2019).", "Next."]


def test_split_empty_input():
    assert split_sentences("") == []


def test_split_ignores_lowercase_continuation():
    assert len(split_sentences("This holds i.e. almost always.")) == 1


def test_split_personal_initial_guard():
    assert len(split_sentences("We thank J. Smith for comments.")) == 1


def test_split_never_inside_parentheses():
    spans = split_sentences("One claim (a detail. More detail.) stands. Two follows.")
    assert len(spans) == 2


def test_split_question_and_exclamation():
    spans = split_sentences("Really? Yes! Done.")
    assert _texts(spans) == ["Really?", "Yes!", "Done."]


def test_split_indices_are_positional():
    spans = split_sentences("A one. B two. C three.")
    assert [s.index for s in spans] == [0, 1, 2]


def test_split_collapses_whitespace():
    spans = split_sentences("A  one.\n\nB   two.")
    assert _texts(spans) == ["A one.", "B two."]


# ---------------------------------------------------------------------------
# Marker grammar

KEYS = {
    author_year_key("Smith", 2019): "D1",
    author_year_key("Jones", 2020): "D2",
    bracket_key(3): "D3",
    bracket_key(4): "D4",
}


def test_author_year_et_al_marker():
    span = detect_citations("Smith et al. (2019) proposed X.", KEYS)
    assert span.cite_keys == ("D1",)
    assert span.is_explicit


def test_author_year_parenthetical_year():
    span = detect_citations("Jones (2020) agrees.", KEYS)
    assert span.cite_keys == ("D2",)


def test_bracket_numeric_multi():
    span = detect_citations("We adopt prior methods [3, 4].", KEYS)
    assert span.cite_keys == ("D3", "D4")
    assert span.is_explicit


def test_parenthetical_segments():
    span = detect_citations("Known results exist (Smith et al., 2019; Jones, 2020).", KEYS)
    assert span.cite_keys == ("D1", "D2")


def test_no_marker_not_explicit():
    span = detect_citations("This idea is elegant.", KEYS)
    assert span.cite_keys == ()
    assert not span.is_explicit


def test_unknown_key_marker_unresolved():
    span = detect_citations("Doe et al. (1999) differ.", KEYS)
    assert span.cite_keys == ()
    assert not span.is_explicit
    assert [m.doc_id for m in span.markers] == [None]


def test_marker_spans_cover_surface_text():
    text = "Both Smith et al. (2019) and [3] matter."
    for m in find_markers(text, KEYS):
        assert text[m.start : m.end] == m.text


# ---------------------------------------------------------------------------
# Grouping

def _flagged(flags):
    return [
        SentenceSpan(text=f"s{i}.", index=i, cite_keys=("D1",) if f == "C" else (),
                     is_explicit=(f == "C"))
        for i, f in enumerate(flags)
    ]


def test_group_adjacent_explicit():
    groups = group_consecutive(_flagged("CCC"))
    assert len(groups) == 1
    assert [s.index for s in groups[0]] == [0, 1, 2]


def test_group_none_explicit():
    assert group_consecutive(_flagged("NN")) == []


def test_group_bridges_single_gap():
    groups = group_consecutive(_flagged("CNC"))
    assert len(groups) == 1
    assert [s.index for s in groups[0]] == [0, 2]


def test_group_two_gap_breaks():
    groups = group_consecutive(_flagged("CNNC"))
    assert len(groups) == 2


def test_group_members_always_explicit():
    for group in group_consecutive(_flagged("CNCNNCC")):
        assert all(s.is_explicit for s in group)


@given(st.text(alphabet="CN", min_size=0, max_size=24))
def test_group_gap_rule_properties(flags):
    spans = _flagged(flags)
    groups = group_consecutive(spans)
    seen = []
    for group in groups:
        assert group
        for a, b in zip(group, group[1:]):
            assert 1 <= b.index - a.index <= 2
        seen.extend(s.index for s in group)
    # every explicit sentence is in exactly one group
    assert sorted(seen) == [s.index for s in spans if s.is_explicit]
    # maximality: consecutive groups are separated by more than one sentence
    for g1, g2 in zip(groups, groups[1:]):
        assert g2[0].index - g1[-1].index > 2


# ---------------------------------------------------------------------------
# Target rewriting

def test_rewrite_single_citation():
    spans = annotate(split_sentences("Smith et al. (2019) proposed X."), KEYS)
    target, cited = rewrite_target(group_consecutive(spans)[0], spans)
    assert target == "<B1> proposed X."
    assert cited == ["D1"]


def test_rewrite_same_key_same_placeholder():
    text = "Smith et al. (2019) built X and Smith et al. (2019) refined it."
    spans = annotate(split_sentences(text), KEYS)
    target, cited = rewrite_target(group_consecutive(spans)[0], spans)
    assert target.count("<B1>") == 2
    assert cited == ["D1"]


def test_rewrite_numbering_by_first_appearance():
    text = "Jones (2020) came second historically. Smith et al. (2019) came first."
    spans = annotate(split_sentences(text), KEYS)
    target, cited = rewrite_target(group_consecutive(spans)[0], spans)
    assert cited == ["D2", "D1"]
    assert target.index("<B1>") < target.index("<B2>")


def test_rewrite_parenthetical_keeps_punctuation():
    spans = annotate(split_sentences("Evidence is clear (Smith et al., 2019; Jones, 2020)."), KEYS)
    target, _ = rewrite_target(group_consecutive(spans)[0], spans)
    assert "(<B1>; <B2>)" in target


def test_rewrite_bracket_keeps_punctuation():
    spans = annotate(split_sentences("We adopt prior methods [3, 4]."), KEYS)
    target, cited = rewrite_target(group_consecutive(spans)[0], spans)
    assert "[<B1>, <B2>]" in target
    assert cited == ["D3", "D4"]


def test_rewrite_unresolvable_marker_becomes_ref():
    text = "Smith et al. (2019) and Jones (2020) align, unlike Doe et al. (1999)."
    spans = annotate(split_sentences(text), KEYS)
    target, cited = rewrite_target(group_consecutive(spans)[0], spans)
    assert "<REF>" in target
    assert cited == ["D1", "D2"]


def test_rewrite_keeps_bridge_sentence():
    text = "Smith et al. (2019) began it. The idea spread. Jones (2020) closed it."
    spans = annotate(split_sentences(text), KEYS)
    groups = group_consecutive(spans)
    assert len(groups) == 1
    target, cited = rewrite_target(groups[0], spans)
    assert "The idea spread." in target
    assert cited == ["D1", "D2"]
    # the bridge contributes no citations
    assert len(groups[0]) == 2


def test_rewrite_too_many_refs():
    names = ["Aa", "Bb", "Cc", "Dd", "Ee", "Ff", "Gg", "Hh", "Ii"]
    keys = {author_year_key(n, 2000 + i): f"D{i}" for i, n in enumerate(names)}
    body = " ".join(f"{n} ({2000 + i}) helped." for i, n in enumerate(names))
    spans = annotate(split_sentences(body), keys)
    with pytest.raises(MaxRefsExceeded):
        rewrite_target(group_consecutive(spans)[0], spans)


# ---------------------------------------------------------------------------
# Dataset assembly

def _intent_fn(label=IntentLabel.BACKGROUND):
    def fn(target):
        return [label] * target.count("<B")
    return fn


def _two_doc_corpus():
    docs = {
        "P1": Document("P1", "Citing paper", "We study things."),
        "D1": Document("D1", "First cited", "About X."),
        "D2": Document("D2", "Second cited", "About Y."),
    }
    return Corpus(docs, dict(KEYS))


def test_build_two_doc_group():
    corpus = _two_doc_corpus()
    bodies = {"P1": "Smith et al. (2019) started. Jones (2020) finished."}
    result = build_dataset(corpus, bodies, _intent_fn())
    assert isinstance(result, BuildResult)
    assert result.skipped == 0
    assert len(result.instances) == 1
    inst = result.instances[0]
    assert inst.instance_id == "P1#0"
    assert [d.id for d in inst.cited] == ["D1", "D2"]
    assert inst.target == "<B1> started. <B2> finished."
    assert len(inst.intents) == 2


def test_build_skips_unresolvable_documents(caplog):
    corpus = Corpus({"P1": Document("P1", "t", "a")}, {author_year_key("Smith", 2019): "GONE"})
    bodies = {"P1": "Smith et al. (2019) did it."}
    with caplog.at_level(logging.WARNING):
        result = build_dataset(corpus, bodies, _intent_fn())
    assert result.instances == []
    assert result.skipped == 1
    assert any("skipping group" in r.message for r in caplog.records)


def test_build_rejects_wrong_intent_count():
    corpus = _two_doc_corpus()
    bodies = {"P1": "Smith et al. (2019) started."}
    with pytest.raises(ValueError):
        build_dataset(corpus, bodies, lambda target: [])


def test_build_multiple_groups_one_body():
    corpus = _two_doc_corpus()
    bodies = {
        "P1": "Smith et al. (2019) started. Filler one. Filler two. Jones (2020) finished."
    }
    result = build_dataset(corpus, bodies, _intent_fn())
    assert [i.instance_id for i in result.instances] == ["P1#0", "P1#1"]


# ---------------------------------------------------------------------------
# Splitting

def _instances(n):
    doc = Document("P", "t", "a")
    return [
        CitationInstance(f"P#{i}", doc, [doc], [IntentLabel.METHOD], "<B1> works.")
        for i in range(n)
    ]


def test_split_ratio_95():
    out = split_dataset(_instances(95), seed=7)
    counts = {s: sum(1 for i in out if i.split == s) for s in ("train", "valid", "test")}
    assert counts == {"train": 76, "valid": 9, "test": 10}


def test_split_deterministic_same_seed():
    a = [i.split for i in split_dataset(_instances(100), seed=7)]
    b = [i.split for i in split_dataset(_instances(100), seed=7)]
    assert a == b


def test_split_changes_with_seed():
    a = [i.split for i in split_dataset(_instances(100), seed=7)]
    b = [i.split for i in split_dataset(_instances(100), seed=8)]
    assert a != b


def test_split_invariant_to_input_order():
    xs = split_dataset(_instances(40), seed=3)
    by_id = {i.instance_id: i.split for i in xs}
    ys = split_dataset(list(reversed(_instances(40))), seed=3)
    assert {i.instance_id: i.split for i in ys} == by_id


def test_split_too_small():
    with pytest.raises(SplitTooSmall):
        split_dataset(_instances(9), seed=0)


@given(st.integers(min_value=10, max_value=400), st.integers(min_value=0, max_value=99))
def test_split_ratio_arithmetic(n, seed):
    out = split_dataset(_instances(n), seed=seed)
    n_train = sum(1 for i in out if i.split == "train")
    n_valid = sum(1 for i in out if i.split == "valid")
    n_test = sum(1 for i in out if i.split == "test")
    assert n_train == int(0.8 * n)
    assert n_valid == int(0.1 * n)
    assert n_train + n_valid + n_test == n


# ---------------------------------------------------------------------------
# Serialization

def test_document_and_body_round_trip(tmp_path):
    docs = [Document("P1", "A title", "An abstract."), Document("D1", "Other", "Text.")]
    save_documents(docs, tmp_path / "docs.jsonl")
    assert load_documents(tmp_path / "docs.jsonl") == {d.id: d for d in docs}

    bodies = {"P1": "Some body text."}
    save_bodies(bodies, tmp_path / "bodies.jsonl")
    assert load_bodies(tmp_path / "bodies.jsonl") == bodies


def test_key_table_round_trip(tmp_path):
    save_key_table(KEYS, tmp_path / "keys.tsv")
    assert load_key_table(tmp_path / "keys.tsv") == KEYS


def test_dataset_record_fields(tmp_path):
    import json

    corpus = _two_doc_corpus()
    bodies = {"P1": "Smith et al. (2019) started. Jones (2020) finished."}
    result = build_dataset(corpus, bodies, _intent_fn(IntentLabel.SUPPORTIVE))
    save_dataset(result.instances, tmp_path / "data.jsonl")

    raw = [json.loads(line) for line in (tmp_path / "data.jsonl").read_text().splitlines()]
    assert len(raw) == 1
    assert set(raw[0]) == {"citing_id", "cited_ids", "intents", "target", "split"}

    records = load_dataset_records(tmp_path / "data.jsonl")
    rec = records[0]
    assert rec["citing_id"] == "P1"
    assert rec["cited_ids"] == ["D1", "D2"]
    assert rec["intents"] == ["supportive", "supportive"]
    assert rec["instance_id"] == "P1#0"
