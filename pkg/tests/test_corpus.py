"""JSONL ingestion, preprocessing, vocabulary, splits, synthetic generator."""

import json

import pytest

from b3sum.corpus import (
    CorpusError,
    NewsPair,
    StructureLabel,
    Vocabulary,
    build_vocab,
    load_jsonl,
    load_summary_file,
    preprocess,
    save_jsonl,
    split_pairs,
    synth_generate,
)


def _pair(i="p1", n_article=5, label=None):
    return NewsPair(
        id=i,
        article=[f"w{k}" for k in range(n_article)],
        summary=[["a", "b"], ["c", "d"], ["e", "f"]],
        label=label,
    )


class TestJsonl:
    def test_round_trip(self, tmp_path):
        pairs = synth_generate(seed=3, n=4)
        path = tmp_path / "c.jsonl"
        save_jsonl(pairs, path)
        loaded, errors = load_jsonl(path)
        assert errors == []
        assert [p.to_json() for p in loaded] == [p.to_json() for p in pairs]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "e.jsonl"
        path.write_text("")
        pairs, errors = load_jsonl(path)
        assert pairs == [] and errors == []

    def test_two_sentence_summary_rejected_with_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = json.dumps({"id": "a", "article": "x y", "summary": ["a", "b", "c"]})
        bad = json.dumps({"id": "b", "article": "x y", "summary": ["a", "b"]})
        path.write_text(good + "\n" + bad + "\n")
        with pytest.raises(CorpusError, match="line 2"):
            load_jsonl(path)
        pairs, errors = load_jsonl(path, strict=False)
        assert len(pairs) == 1
        assert errors[0][0] == 2 and "3 sentences" in errors[0][1]

    def test_missing_field_and_bad_label(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        lines = [
            json.dumps({"id": "a", "summary": ["a", "b", "c"]}),
            json.dumps({"id": "b", "article": "x", "summary": ["a", "b", "c"], "label": "zigzag"}),
            "{not json",
        ]
        path.write_text("\n".join(lines) + "\n")
        pairs, errors = load_jsonl(path, strict=False)
        assert pairs == []
        assert [e[0] for e in errors] == [1, 2, 3]
        assert "article" in errors[0][1]
        assert "label" in errors[1][1]

    def test_labels_round_trip(self, tmp_path):
        path = tmp_path / "l.jsonl"
        save_jsonl([_pair(label=StructureLabel.SEQUENCE_SEG)], path)
        loaded, _ = load_jsonl(path)
        assert loaded[0].label is StructureLabel.SEQUENCE_SEG

    def test_summary_file_allows_empty_sentences(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(json.dumps({"id": "d1", "summary": ["a b", "", "c"]}) + "\n")
        out = load_summary_file(path)
        assert out["d1"] == [["a", "b"], [], ["c"]]


class TestStructureLabel:
    def test_binary_projection_total(self):
        assert StructureLabel.PARALLEL.binary == "parallel"
        assert StructureLabel.PARALLEL_ENUM.binary == "parallel"
        assert StructureLabel.SEQUENCE.binary == "sequence"
        assert StructureLabel.SEQUENCE_SEG.binary == "sequence"

    def test_binary_index(self):
        assert StructureLabel.PARALLEL.binary_index == 0
        assert StructureLabel.SEQUENCE_SEG.binary_index == 1


class TestPreprocess:
    def test_truncates_to_first_max_src_len_tokens(self):
        pair = _pair(n_article=500)
        out, report = preprocess([pair], max_src_len=400, min_summary_len=0)
        assert out[0].article == pair.article[:400]
        assert report.truncated == 1

    def test_drops_short_summaries(self):
        out, report = preprocess([_pair()], max_src_len=400, min_summary_len=70)
        assert out == []
        assert report.dropped_short_summary == 1

    def test_min_zero_keeps_everything(self):
        out, report = preprocess([_pair(), _pair("p2")], max_src_len=400, min_summary_len=0)
        assert len(out) == 2
        assert report.kept == 2 and report.dropped_short_summary == 0

    def test_boundary_is_inclusive(self):
        out, _ = preprocess([_pair()], max_src_len=400, min_summary_len=6)
        assert len(out) == 1  # exactly 6 summary tokens survives


class TestVocabulary:
    def test_specials_fixed(self):
        v = Vocabulary(["x"])
        assert v.id("<pad>") == 0 and v.id("<unk>") == 1
        assert v.id("<s>") == 2 and v.id("</s>") == 3 and v.id("<sb>") == 4
        assert v.id("x") == 5

    def test_unknown_maps_to_unk(self):
        v = Vocabulary(["x"])
        assert v.id("nope") == Vocabulary.UNK

    def test_duplicate_rejected(self):
        with pytest.raises(CorpusError, match="duplicate"):
            Vocabulary(["x", "x"])

    def test_save_load(self, tmp_path):
        v = Vocabulary(["alpha", "beta"])
        v.save(tmp_path / "v.json")
        w = Vocabulary.load(tmp_path / "v.json")
        assert w.size == v.size and w.id("beta") == v.id("beta")


def _counting_corpus(text_tokens):
    return [
        NewsPair(
            id="c", article=text_tokens, summary=[["s"], ["s"], ["s"]]
        )
    ]


class TestBuildVocab:
    def test_min_count_rule(self):
        v = build_vocab(_counting_corpus(["a", "a", "b"]), mode="min_count", min_count=2)
        assert "a" in v and "b" not in v
        assert "s" in v  # summary tokens count too (appears 3x)

    def test_cap_keeps_most_frequent(self):
        v = build_vocab(_counting_corpus(["a", "a", "b"]), mode="cap", size=2)
        assert "a" in v and "s" in v and "b" not in v

    def test_deterministic_assignment(self):
        pairs = synth_generate(seed=5, n=10)
        v1 = build_vocab(pairs, mode="cap", size=30)
        v2 = build_vocab(pairs, mode="cap", size=30)
        assert [v1.token(i) for i in range(v1.size)] == [v2.token(i) for i in range(v2.size)]

    def test_frequency_ties_broken_by_first_occurrence(self):
        v = build_vocab(_counting_corpus(["zz", "aa"]), mode="cap", size=1)
        assert "s" in v  # "s" appears 3 times, beats both
        v2 = build_vocab(_counting_corpus(["zz", "aa", "zz", "aa"]), mode="cap", size=2)
        assert "zz" in v2 and "s" in v2

    def test_empty_corpus_rejected(self):
        with pytest.raises(CorpusError):
            build_vocab([], mode="cap")

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="mode"):
            build_vocab(_counting_corpus(["a"]), mode="top")


class TestSplit:
    def test_explicit_sizes_disjoint_cover(self):
        pairs = synth_generate(seed=1, n=4)
        tr, dev, te = split_pairs(pairs, sizes=(2, 1, 1), seed=0)
        ids = [p.id for p in tr + dev + te]
        assert len(ids) == 4 and len(set(ids)) == 4

    def test_same_seed_same_split(self):
        pairs = synth_generate(seed=1, n=20)
        a = split_pairs(pairs, sizes=(10, 5, 5), seed=9)
        b = split_pairs(pairs, sizes=(10, 5, 5), seed=9)
        assert [p.id for p in a[0]] == [p.id for p in b[0]]

    def test_oversized_request_rejected(self):
        with pytest.raises(CorpusError, match="exceed"):
            split_pairs(synth_generate(seed=1, n=3), sizes=(3, 1, 1))

    def test_reference_proportions_scale(self):
        pairs = synth_generate(seed=1, n=214)
        tr, dev, te = split_pairs(pairs, seed=0)
        assert len(dev) == len(te) == 1
        assert len(tr) == 212

    def test_id_lists(self):
        pairs = synth_generate(seed=1, n=4)
        ids = [p.id for p in pairs]
        tr, dev, te = split_pairs(pairs, id_lists=([ids[3], ids[0]], [ids[1]], [ids[2]]))
        assert [p.id for p in tr] == [ids[3], ids[0]]


class TestSynthGenerate:
    def test_deterministic(self):
        a = synth_generate(seed=7, n=10)
        b = synth_generate(seed=7, n=10)
        assert [p.to_json() for p in a] == [p.to_json() for p in b]

    def test_structure_mix_one_is_all_parallel(self):
        pairs = synth_generate(seed=2, n=25, structure_mix=1.0)
        assert all(p.label is StructureLabel.PARALLEL for p in pairs)

    def test_subject_entity_rule_recovers_gold_labels(self):
        # By construction the third sentence's subject is sentence 1's
        # entity for parallel pairs and sentence 2's for sequence pairs.
        for pair in synth_generate(seed=9, n=120, oov_rate=0.3, structure_mix=0.7):
            subj1, subj2, subj3 = (s[0] for s in pair.summary)
            assert subj1 != subj2
            if subj3 == subj1:
                derived = StructureLabel.PARALLEL
            elif subj3 == subj2:
                derived = StructureLabel.SEQUENCE
            else:
                raise AssertionError("third sentence subject matches neither")
            assert derived is pair.label

    def test_articles_contain_all_summary_facts(self):
        for pair in synth_generate(seed=4, n=30):
            text = " ".join(pair.article)
            for sent in pair.summary:
                assert " ".join(sent) in text

    def test_three_sentences_and_oov_rate_zero(self):
        pairs = synth_generate(seed=3, n=15, oov_rate=0.0)
        lexicon_vocab = build_vocab(pairs, mode="min_count", min_count=1)
        for p in pairs:
            assert len(p.summary) == 3
            assert all(t in lexicon_vocab for t in p.article)

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError):
            synth_generate(seed=1, n=0)
