import json

import pytest
from hypothesis import given, settings, strategies as st

from lesbar.corpus import (
    RatedSentence,
    Vocabulary,
    build_vocab,
    carve_final_split,
    clean_sentence,
    encode_bert_style,
    encode_gpt_style,
    load_corpus,
    load_split_manifest,
    make_cv_splits,
    tokenize,
    write_corpus,
    write_split_manifest,
)


def write_raw(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCorpus:
    def test_strips_masking_quotes(self, tmp_path):
        raw = 'id,sentence,mos\ns1,"""Er sagte, hallo.""",2.5\n'
        corpus = load_corpus(write_raw(tmp_path / "c.csv", raw))
        assert corpus[0].text == "Er sagte, hallo."
        assert corpus[0].mos == 2.5

    def test_plain_sentence_untouched(self, tmp_path):
        raw = "id,sentence,mos\ns1,Der Hund bellt.,1.5\n"
        corpus = load_corpus(write_raw(tmp_path / "c.csv", raw))
        assert corpus[0].text == "Der Hund bellt."
        assert corpus[0].mos == 1.5

    def test_thousand_rows(self, tmp_path):
        lines = ["id,sentence,mos"]
        lines += [f"s{i},Satz nummer {i},{1.0 + (i % 60) / 10.0}" for i in range(1000)]
        corpus = load_corpus(write_raw(tmp_path / "c.csv", "\n".join(lines) + "\n"))
        assert len(corpus) == 1000
        assert [s.id for s in corpus] == [f"s{i}" for i in range(1000)]

    def test_bad_header(self, tmp_path):
        with pytest.raises(ValueError, match="header"):
            load_corpus(write_raw(tmp_path / "c.csv", "id,text,mos\na,b,1\n"))

    def test_malformed_row_names_row_number(self, tmp_path):
        raw = "id,sentence,mos\ns1,ok,2.0\ns2,nur zwei\n"
        with pytest.raises(ValueError, match="row 3"):
            load_corpus(write_raw(tmp_path / "c.csv", raw))

    def test_bad_mos_names_row_number(self, tmp_path):
        raw = "id,sentence,mos\ns1,ok,zwei\n"
        with pytest.raises(ValueError, match="row 2"):
            load_corpus(write_raw(tmp_path / "c.csv", raw))

    def test_mos_out_of_range_names_id(self, tmp_path):
        raw = "id,sentence,mos\nweird,zu gross,8.5\n"
        with pytest.raises(ValueError, match="weird"):
            load_corpus(write_raw(tmp_path / "c.csv", raw))

    def test_duplicate_id_rejected(self, tmp_path):
        raw = "id,sentence,mos\ns1,eins,2.0\ns1,zwei,3.0\n"
        with pytest.raises(ValueError, match="duplicate"):
            load_corpus(write_raw(tmp_path / "c.csv", raw))

    def test_empty_after_cleanup_rejected(self, tmp_path):
        raw = 'id,sentence,mos\ns1,"""""",2.0\n'
        with pytest.raises(ValueError, match="empty"):
            load_corpus(write_raw(tmp_path / "c.csv", raw))


class TestRoundTrip:
    def test_round_trip_tricky_texts(self, tmp_path):
        sentences = [
            RatedSentence("a", "Der Hund bellt.", 1.5),
            RatedSentence("b", "Er sagte, hallo.", 2.25),
            RatedSentence("c", '"Ein Zitat"', 3.0),
            RatedSentence("d", 'Schluss mit "so"', 4.0),
            RatedSentence("e", "Umlaute: äöü ß", 6.75),
        ]
        path = tmp_path / "rt.csv"
        write_corpus(path, sentences)
        assert load_corpus(path) == sentences

    text_strategy = st.text(
        alphabet=st.sampled_from('abcXYZäöü ,."!?'), min_size=1, max_size=40
    ).filter(lambda t: t.strip())

    @settings(max_examples=150, deadline=None)
    @given(texts=st.lists(text_strategy, min_size=1, max_size=8, unique=True))
    def test_round_trip_property(self, tmp_path_factory, texts):
        tmp = tmp_path_factory.mktemp("rt")
        sentences = [RatedSentence(f"s{i}", t, 1.0 + (i % 6)) for i, t in enumerate(texts)]
        path = tmp / "c.csv"
        write_corpus(path, sentences)
        assert load_corpus(path) == sentences


def corpus_of(n):
    return [RatedSentence(f"s{i}", f"wort {i}", 1.0 + (i % 7) * 0.5) for i in range(n)]


class TestSplits:
    def test_fold_sizes_match_protocol(self):
        corpus = corpus_of(1000)
        splits = make_cv_splits(corpus, k=5, es_fraction=0.1, seed=3)
        assert len(splits) == 5
        for split in splits:
            assert len(split.validation_ids) == 200
            assert len(split.early_stop_ids) == 80
            assert len(split.train_ids) == 720

    def test_partition_and_disjointness(self):
        corpus = corpus_of(103)
        all_ids = {s.id for s in corpus}
        splits = make_cv_splits(corpus, k=5, es_fraction=0.1, seed=1)
        validation_union = set()
        for split in splits:
            train = set(split.train_ids)
            es = set(split.early_stop_ids)
            val = set(split.validation_ids)
            assert train | es | val == all_ids
            assert not (train & es) and not (train & val) and not (es & val)
            validation_union |= val
        assert validation_union == all_ids

    def test_deterministic_given_seed(self):
        corpus = corpus_of(60)
        assert make_cv_splits(corpus, 5, 0.1, seed=9) == make_cv_splits(corpus, 5, 0.1, seed=9)
        assert make_cv_splits(corpus, 5, 0.1, seed=9) != make_cv_splits(corpus, 5, 0.1, seed=10)

    def test_tiny_corpus_fold_sizes(self):
        splits = make_cv_splits(corpus_of(10), k=5, es_fraction=0.1, seed=0)
        assert [len(s.validation_ids) for s in splits] == [2, 2, 2, 2, 2]
        for split in splits:
            assert len(split.early_stop_ids) == 1
            assert len(split.train_ids) == 7

    def test_k_larger_than_corpus(self):
        with pytest.raises(ValueError):
            make_cv_splits(corpus_of(3), k=5, es_fraction=0.1, seed=0)

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            make_cv_splits(corpus_of(10), k=1, es_fraction=0.1, seed=0)
        with pytest.raises(ValueError):
            make_cv_splits(corpus_of(10), k=2, es_fraction=0.0, seed=0)

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.integers(min_value=12, max_value=90),
        k=st.integers(min_value=2, max_value=6),
        seed=st.integers(min_value=0, max_value=2**32),
    )
    def test_split_properties_hold_for_any_seed(self, n, k, seed):
        corpus = corpus_of(n)
        splits = make_cv_splits(corpus, k=k, es_fraction=0.15, seed=seed)
        all_ids = {s.id for s in corpus}
        union = set()
        for split in splits:
            parts = (set(split.train_ids), set(split.early_stop_ids),
                     set(split.validation_ids))
            assert parts[0] | parts[1] | parts[2] == all_ids
            assert sum(len(p) for p in parts) == n
            union |= parts[2]
        assert union == all_ids


class TestFinalSplit:
    def test_protocol_sizes(self):
        train, es = carve_final_split(corpus_of(1000), es_fraction=0.075, seed=4)
        assert len(es) == 75
        assert len(train) == 925
        assert not (set(train) & set(es))

    def test_degenerate_fraction_rejected(self):
        with pytest.raises(ValueError):
            carve_final_split(corpus_of(100), es_fraction=0.0, seed=0)
        with pytest.raises(ValueError):
            carve_final_split(corpus_of(100), es_fraction=1.0, seed=0)

    def test_reproducible(self):
        corpus = corpus_of(40)
        assert carve_final_split(corpus, 0.1, seed=7) == carve_final_split(corpus, 0.1, seed=7)


def test_split_manifest_round_trip(tmp_path):
    corpus = corpus_of(30)
    split = make_cv_splits(corpus, 3, 0.1, seed=2)[1]
    path = tmp_path / "fold_1.json"
    write_split_manifest(path, split, seed=2)
    loaded, seed = load_split_manifest(path)
    assert loaded == split
    assert seed == 2
    payload = json.loads(path.read_text())
    assert set(payload) == {"fold", "train", "early_stop", "validation", "seed"}


class TestVocabulary:
    def test_contains_tokens_and_specials(self):
        vocab = build_vocab(["a b", "a c"], max_size=10)
        for token in ("a", "b", "c", "<pad>", "<unk>", "<cls>", "<bos>", "<eos>"):
            assert token in vocab
        assert vocab.size == 8

    def test_max_size_keeps_most_frequent(self):
        vocab = build_vocab(["a b", "a c"], max_size=1)
        assert "a" in vocab
        assert "b" not in vocab and "c" not in vocab

    def test_frequency_tie_broken_lexicographically(self):
        vocab = build_vocab(["b c", "c b"], max_size=1)
        assert "b" in vocab
        assert "c" not in vocab

    def test_special_ids_distinct_and_in_range(self):
        vocab = build_vocab(["x y z"], max_size=5)
        specials = {vocab.pad_id, vocab.unk_id, vocab.cls_id, vocab.bos_id, vocab.eos_id}
        assert len(specials) == 5
        assert all(0 <= i < vocab.size for i in specials)

    def test_payload_round_trip(self):
        vocab = build_vocab(["a b c a"], max_size=10)
        clone = Vocabulary.from_payload(vocab.to_payload())
        assert clone.tokens() == vocab.tokens()

    def test_tokenize_splits_punctuation(self):
        assert tokenize("Er sagte, hallo.") == ["Er", "sagte", ",", "hallo", "."]

    def test_clean_sentence_rule(self):
        assert clean_sentence('"Er sagte, hallo."') == "Er sagte, hallo."
        assert clean_sentence('"nur vorne') == '"nur vorne'
        assert clean_sentence('"') == '"'


class TestEncoding:
    vocab = build_vocab(["a b", "a c"], max_size=10)

    def test_bert_style_layout(self):
        seq = encode_bert_style("a b", self.vocab, max_len=5)
        assert seq.ids == (self.vocab.cls_id, self.vocab.lookup("a"), self.vocab.lookup("b"),
                           self.vocab.pad_id, self.vocab.pad_id)
        assert seq.mask == (1, 1, 1, 0, 0)

    def test_bert_style_truncates_tail(self):
        text = " ".join(["a"] * 200)
        seq = encode_bert_style(text, self.vocab, max_len=128)
        assert seq.length == 128
        assert all(m == 1 for m in seq.mask)
        assert seq.ids[0] == self.vocab.cls_id

    def test_unknown_word_maps_to_unk(self):
        seq = encode_bert_style("zzz", self.vocab, max_len=4)
        assert seq.ids[1] == self.vocab.unk_id

    def test_gpt_style_layout(self):
        seq = encode_gpt_style("a", self.vocab, max_len=4)
        assert seq.ids == (self.vocab.bos_id, self.vocab.lookup("a"), self.vocab.eos_id,
                           self.vocab.pad_id)
        assert seq.mask == (1, 1, 1, 0)

    def test_gpt_style_retains_eos_when_truncating(self):
        text = " ".join(["a"] * 50)
        seq = encode_gpt_style(text, self.vocab, max_len=16)
        assert seq.length == 16
        assert seq.ids[-1] == self.vocab.eos_id
        assert all(m == 1 for m in seq.mask)

    def test_gpt_style_empty_text(self):
        seq = encode_gpt_style("", self.vocab, max_len=5)
        assert seq.ids == (self.vocab.bos_id, self.vocab.eos_id,
                           self.vocab.pad_id, self.vocab.pad_id, self.vocab.pad_id)

    @given(st.text(alphabet=st.sampled_from("ab c.x"), max_size=60),
           st.integers(min_value=2, max_value=20))
    def test_fixed_length_and_contiguous_padding(self, text, max_len):
        for seq in (encode_bert_style(text, self.vocab, max_len),
                    encode_gpt_style(text, self.vocab, max_len)):
            assert seq.length == max_len
            assert len(seq.mask) == max_len
            real = seq.real_length
            assert all(m == 1 for m in seq.mask[:real])
            assert all(m == 0 for m in seq.mask[real:])
            assert all(i == self.vocab.pad_id for i in seq.ids[real:])
