import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phonojsd.errors import ParseError
from phonojsd.phonemizer import (
    SIL,
    UNK,
    OovStats,
    PhonemeInventory,
    PhonemeSequence,
    insert_silence,
    load_lexicon,
    normalize_text,
    phonemize_lines,
    phonemize_sentence,
)
from phonojsd.rng import Xorshift64Star

from synth import synthetic_lexicon, word_sentences


def write(tmp_path, text, name="lex.txt", encoding="utf-8"):
    path = tmp_path / name
    path.write_bytes(text.encode(encoding))
    return path


def labels(seq):
    return seq.labels()


class TestInventory:
    def test_ids_are_dense_and_bijective(self):
        inv = PhonemeInventory(["A", "B", "SIL"])
        assert [inv.id_of(x) for x in inv.labels] == [0, 1, 2]
        assert inv.sil_id == 2
        assert inv.unk_id is None

    @pytest.mark.parametrize(
        "labels",
        [["A", "A", "SIL"], ["A", ""], ["A", "B"], ["SIL", "SIL"]],
    )
    def test_rejects_bad_labels(self, labels):
        with pytest.raises(ValueError):
            PhonemeInventory(labels)

    def test_rejects_too_many_labels(self):
        with pytest.raises(ValueError):
            PhonemeInventory([f"p{i}" for i in range(65535)] + ["SIL"])

    def test_fingerprint_depends_on_order(self):
        a = PhonemeInventory(["A", "B", "SIL"])
        b = PhonemeInventory(["B", "A", "SIL"])
        assert a.fingerprint != b.fingerprint
        assert a.fingerprint == PhonemeInventory(["A", "B", "SIL"]).fingerprint


class TestLoadLexicon:
    def test_strip_stress(self, tmp_path):
        lex = load_lexicon(write(tmp_path, "THE DH AH0\nCAT K AE1 T\n"), strip_stress=True)
        assert lex.entries == {"THE": (("DH", "AH"),), "CAT": (("K", "AE", "T"),)}
        assert set(lex.inventory.labels) == {"DH", "AH", "K", "AE", "T", "SIL"}
        assert lex.inventory.labels == ("DH", "AH", "K", "AE", "T", "SIL")

    def test_keep_stress(self, tmp_path):
        lex = load_lexicon(write(tmp_path, "THE DH AH0\n"), strip_stress=False)
        assert lex.primary("THE") == ("DH", "AH0")

    def test_empty_file(self, tmp_path):
        lex = load_lexicon(write(tmp_path, ""))
        assert len(lex) == 0
        assert lex.inventory.labels == (SIL,)

    def test_variants(self, tmp_path):
        lex = load_lexicon(write(tmp_path, "READ R IY1 D\nREAD(2) R EH1 D\n"))
        assert lex.pronunciations("READ") == (("R", "IY", "D"), ("R", "EH", "D"))
        assert lex.primary("READ") == ("R", "IY", "D")

    def test_comments_and_duplicates(self, tmp_path):
        lex = load_lexicon(write(tmp_path, ";;; header\nA AH0\nA AH0\n\nB B IY1\n"))
        assert lex.pronunciations("A") == (("AH",),)
        assert "B" in lex

    def test_malformed_line_reports_line_number(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_lexicon(write(tmp_path, "A AH0\nLONELY\n"))
        assert err.value.line_no == 2
        assert ":2:" in str(err.value)

    def test_latin1_fallback(self, tmp_path):
        lex = load_lexicon(write(tmp_path, "CAFÉ K AE1 F EY1\n", encoding="latin-1"))
        assert "CAFÉ" in lex

    def test_lowercase_words_are_case_folded(self, tmp_path):
        lex = load_lexicon(write(tmp_path, "the DH AH0\n"))
        assert "THE" in lex

    def test_deterministic(self, tmp_path):
        _, lines, _ = synthetic_lexicon(200, seed=3)
        path = write(tmp_path, "\n".join(lines))
        a, b = load_lexicon(path), load_lexicon(path)
        assert a.inventory.labels == b.inventory.labels
        assert a.entries == b.entries

    def test_every_label_in_inventory(self):
        lex, _, _ = synthetic_lexicon(200, seed=4)
        for prons in lex.entries.values():
            for pron in prons:
                assert all(p in lex.inventory for p in pron)


class TestNormalize:
    @pytest.mark.parametrize(
        "raw, expected",
        [
            ("The cat, sat.", ["THE", "CAT", "SAT"]),
            ("don't go", ["DON'T", "GO"]),
            ("   ", []),
            ("'quoted' words", ["QUOTED", "WORDS"]),
            ("rock’n’roll!", ["ROCK'N'ROLL"]),
            ("«Hello» — world…", ["HELLO", "WORLD"]),
        ],
    )
    def test_rules(self, raw, expected):
        assert normalize_text(raw) == expected


class TestPhonemizeSentence:
    @pytest.fixture
    def lex(self, tiny_lexicon_path):
        return load_lexicon(tiny_lexicon_path)

    def test_lookup_concatenation(self, lex):
        seq = phonemize_sentence(["THE", "CAT"], lex)
        assert labels(seq) == ["DH", "AH", "K", "AE", "T"]
        assert seq.word_starts == (2,)

    def test_drop_sentence(self, lex):
        stats = OovStats()
        assert phonemize_sentence(["THE", "ZZZQ"], lex, "drop_sentence", stats) is None
        assert (stats.sentences, stats.skipped, stats.oov_tokens) == (1, 1, 1)

    def test_drop_word(self, lex):
        stats = OovStats()
        seq = phonemize_sentence(["THE", "ZZZQ"], lex, "drop_word", stats)
        assert labels(seq) == ["DH", "AH"]
        assert (stats.skipped, stats.oov_tokens) == (0, 1)

    def test_unk(self, lex):
        lex = lex.with_unk()
        seq = phonemize_sentence(["THE", "ZZZQ", "CAT"], lex, "unk")
        assert labels(seq) == ["DH", "AH", UNK, "K", "AE", "T"]
        assert seq.word_starts == (2, 3)

    def test_unk_needs_unk_inventory(self, lex):
        with pytest.raises(ValueError):
            phonemize_sentence(["ZZZQ"], lex, "unk")

    def test_unknown_policy(self, lex):
        with pytest.raises(ValueError):
            phonemize_sentence(["THE"], lex, "guess")

    @pytest.mark.parametrize("policy", ["drop_sentence", "drop_word"])
    def test_no_oov_means_no_skip(self, lex, policy):
        stats = OovStats()
        seq = phonemize_sentence(normalize_text("the dog read a mat"), lex, policy, stats)
        assert stats.skipped == 0
        assert len(seq) == sum(len(lex.primary(w)) for w in ["THE", "DOG", "READ", "A", "MAT"])

    def test_round_trip_has_no_sil_or_unk(self):
        lex, _, words = synthetic_lexicon(150, seed=1)
        lex = lex.with_unk()
        for s in word_sentences(words, 50, seed=2):
            seq = phonemize_sentence(normalize_text(s), lex, "unk")
            assert lex.inventory.sil_id not in seq.ids
            assert lex.inventory.unk_id not in seq.ids


class TestInsertSilence:
    @pytest.fixture
    def seq(self, tiny_lexicon_path):
        lex = load_lexicon(tiny_lexicon_path)
        return phonemize_sentence(["THE", "CAT", "SAT"], lex)

    def test_rate_zero(self, seq):
        out = insert_silence(seq, seq.word_starts, 0.0, Xorshift64Star(1))
        assert labels(out) == [SIL, "DH", "AH", "K", "AE", "T", "S", "AE", "T", SIL]

    def test_rate_one(self, seq):
        out = insert_silence(seq, seq.word_starts, 1.0, Xorshift64Star(1))
        assert labels(out) == [SIL, "DH", "AH", SIL, "K", "AE", "T", SIL, "S", "AE", "T", SIL]

    @pytest.mark.parametrize("rate", [-0.1, 1.5, float("nan")])
    def test_bad_rate(self, seq, rate):
        with pytest.raises(ValueError):
            insert_silence(seq, seq.word_starts, rate, Xorshift64Star(1))

    @pytest.mark.parametrize("bounds", [(0,), (8,), (5, 2), (2, 2)])
    def test_bad_boundaries(self, seq, bounds):
        with pytest.raises(ValueError):
            insert_silence(seq, bounds, 0.5, Xorshift64Star(1))

    @given(
        ids=st.lists(st.integers(0, 4), min_size=1, max_size=40),
        rate=st.floats(0, 1),
        seed=st.integers(0, 2**64 - 1),
        data=st.data(),
    )
    @settings(max_examples=200, deadline=None)
    def test_removing_sil_recovers_input(self, ids, rate, seed, data):
        inv = PhonemeInventory(["A", "B", "C", "D", "E", "SIL"])
        seq = PhonemeSequence(np.array(ids, dtype=np.uint16), inv)
        interior = list(range(1, len(ids)))
        bounds = sorted(data.draw(st.sets(st.sampled_from(interior))) if interior else [])
        out = insert_silence(seq, bounds, rate, Xorshift64Star(seed))
        assert out.ids[0] == inv.sil_id and out.ids[-1] == inv.sil_id
        assert np.array_equal(out.ids[out.ids != inv.sil_id], seq.ids)
        again = insert_silence(seq, bounds, rate, Xorshift64Star(seed))
        assert np.array_equal(out.ids, again.ids)


def test_phonemize_lines_skips_and_counts(tiny_lexicon_path):
    lex = load_lexicon(tiny_lexicon_path)
    stats = OovStats()
    lines = ["the cat sat", "zzz cat", "   ", "a dog"]
    out = list(phonemize_lines(lines, lex, "drop_sentence", 0.0, 0, stats))
    assert [labels(s) for s in out] == [
        [SIL, "DH", "AH", "K", "AE", "T", "S", "AE", "T", SIL],
        [SIL, "AH", "D", "AO", "G", SIL],
    ]
    assert (stats.sentences, stats.skipped, stats.empty, stats.used) == (4, 1, 1, 2)
    assert stats.skip_rate == 0.25
