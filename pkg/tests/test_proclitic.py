import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hebprep.proclitic import (
    DEFAULT_GRAMMAR, EPS, ProcliticFunction as F, ProcliticGrammar, ProcliticSegmenter, brute_force_decode,
    decode, first_piece_gate, valid_function_sets,
)
from hebprep.wordpiece import UNK, Vocabulary, encode

NAMES = DEFAULT_GRAMMAR.names
PREFIX_LETTERS = "ושכבלמה"
OTHER_LETTERS = "אגדזחטינסעפצקרת"


def probs(**kw):
    p = np.full(8, 0.05)
    for name, v in kw.items():
        p[NAMES.index(name)] = v
    return p


def random_word(rng):
    n_prefix = int(rng.integers(0, 5))
    n_rest = int(rng.integers(0, 4))
    letters = [rng.choice(list(PREFIX_LETTERS)) for _ in range(n_prefix)]
    letters += [rng.choice(list(PREFIX_LETTERS + OTHER_LETTERS)) for _ in range(n_rest)]
    return "".join(letters) or "א"


class TestGrammar:
    def test_eight_functions(self):
        assert len(DEFAULT_GRAMMAR) == 8
        assert NAMES == tuple(f.value for f in F)

    def test_json_round_trip(self, tmp_path):
        p = tmp_path / "g.json"
        DEFAULT_GRAMMAR.save(p)
        assert ProcliticGrammar.load(p) == DEFAULT_GRAMMAR

    def test_bad_covert_rule(self):
        with pytest.raises(ValueError):
            ProcliticGrammar.from_dict({"functions": [{"name": "A", "surface": "א", "slot": 1}],
                                        "covert": {"A": ["B"]}})


class TestValidSets:
    def test_that_went(self):
        sets = dict(valid_function_sets("שהלך"))
        assert sets[()] == 0
        assert sets[("SCONJ_SHE",)] == 1

    def test_from_the_meal(self):
        sets = dict(valid_function_sets("מהארוחה"))
        assert sets[("ADP_MIN", "DET_HE")] == 2
        assert ("ADP_MIN",) in sets

    def test_non_proclitic_letter(self):
        assert valid_function_sets("טוב") == [((), 0)]

    def test_non_hebrew(self):
        assert valid_function_sets("word") == [((), 0)]

    def test_empty(self):
        with pytest.raises(ValueError, match="empty word"):
            valid_function_sets("")

    def test_covert_det_after_be(self):
        sets = dict(valid_function_sets("בבית"))
        assert sets[("ADP_BE",)] == 1
        assert sets[("ADP_BE", "DET_HE")] == 1
        # no overt ה after ב
        assert all(c <= 1 for c in sets.values())

    def test_kshe(self):
        sets = dict(valid_function_sets("וכשחזר"))
        assert sets[("CCONJ_VAV", "SCONJ_KSHE")] == 3
        assert ("CCONJ_VAV", "ADP_KE") in sets

    def test_base_never_empty(self):
        # "וה" cannot be VAV + DET: nothing would be left
        sets = dict(valid_function_sets("וה"))
        assert ("CCONJ_VAV", "DET_HE") not in sets
        assert ("CCONJ_VAV",) in sets

    def test_single_letter_word(self):
        assert valid_function_sets("ו") == [((), 0)]


class TestDecode:
    def test_that_went(self):
        res = decode("שהלך", probs(SCONJ_SHE=0.9))
        assert res.functions == ("SCONJ_SHE",) and res.base == "הלך"
        assert res.prefix_segments == (("ש", "SCONJ_SHE"),)

    def test_that_went_brute_force_agrees(self):
        p = probs(SCONJ_SHE=0.9)
        assert brute_force_decode("שהלך", p) == decode("שהלך", p)

    def test_score_value(self):
        res = decode("שהלך", probs(SCONJ_SHE=0.9))
        assert res.score == pytest.approx(math.log(0.9) + 7 * math.log(0.95))

    def test_from_the_meal(self):
        res = decode("מהארוחה", probs(ADP_MIN=0.95, DET_HE=0.9))
        assert res.functions == ("ADP_MIN", "DET_HE") and res.base == "ארוחה"

    def test_all_zero(self):
        for w in ["שהלך", "מהארוחה", "ובבית", "טוב"]:
            assert decode(w, np.zeros(8)).functions == ()

    def test_no_options(self):
        assert decode("טוב", np.ones(8)).functions == ()

    def test_tie_prefers_fewer(self):
        res = decode("שהלך", np.full(8, 0.5))
        assert res.functions == ()
        assert brute_force_decode("שהלך", np.full(8, 0.5)).functions == ()

    def test_tie_enum_order(self):
        # ADP_BE alone vs ADP_BE + covert DET: with p(DET)=0.5 both score the same
        res = decode("בבית", probs(ADP_BE=0.9, DET_HE=0.5))
        assert res.functions == ("ADP_BE",)

    def test_covert_det_segments(self):
        res = decode("בבית", probs(ADP_BE=0.9, DET_HE=0.9))
        assert res.functions == ("ADP_BE", "DET_HE")
        assert res.prefix_segments == (("ב", "ADP_BE"), ("", "DET_HE"))
        assert res.segments == ["ב", "בית"]

    def test_clamping(self):
        res = decode("שהלך", probs(SCONJ_SHE=1.0))
        assert math.isfinite(res.score)
        assert res.score == pytest.approx(math.log(1 - EPS) + 7 * math.log(0.95))

    @pytest.mark.parametrize("bad", [np.full(7, 0.5), np.full(8, 1.5), np.full(8, np.nan)])
    def test_bad_probs(self, bad):
        with pytest.raises(ValueError):
            decode("שהלך", bad)


def test_decoder_equals_brute_force_random():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        w = random_word(rng)
        p = rng.random(8)
        a, b = decode(w, p), brute_force_decode(w, p)
        assert a == b, (w, p)


@settings(max_examples=300)
@given(st.text(alphabet=PREFIX_LETTERS + "אט", min_size=1, max_size=7),
       st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_decode_properties(word, p):
    res = decode(word, p)
    assert res == brute_force_decode(word, p)
    assert (res.functions, res.consumed) in valid_function_sets(word)
    assert "".join(s for s, _ in res.prefix_segments) + res.base == word
    assert res.base


@settings(max_examples=200)
@given(st.text(alphabet=PREFIX_LETTERS + "אט", min_size=1, max_size=7),
       st.lists(st.floats(0, 1), min_size=8, max_size=8), st.randoms())
def test_impossible_functions_irrelevant(word, p, rnd):
    """Shuffling the probabilities of functions the word cannot spell leaves
    the decision unchanged."""
    used = {n for names, _ in valid_function_sets(word) for n in names}
    idle = [i for i, n in enumerate(NAMES) if n not in used]
    q = list(p)
    vals = [q[i] for i in idle]
    rnd.shuffle(vals)
    for i, v in zip(idle, vals):
        q[i] = v
    assert decode(word, p).functions == decode(word, q).functions


class TestFirstPieceGate:
    def test_positions(self):
        v = Vocabulary([UNK, "של", "##ום", "עולם", "טוב"])
        enc = encode("טוב שלום עולם", v)
        assert enc.word_index == [0, 1, 1, 2]
        assert first_piece_gate("טוב", enc) == 1
        assert first_piece_gate("שלום", enc) == 2
        assert first_piece_gate("עולם", enc) == 4
        assert first_piece_gate(2, enc, offset=0) == 3

    def test_repeated_word(self):
        v = Vocabulary([UNK, "א", "ב"])
        enc = encode("א ב א", v)
        assert first_piece_gate("א", enc, occurrence=1) == 3

    def test_missing(self):
        v = Vocabulary([UNK, "א"])
        with pytest.raises(ValueError):
            first_piece_gate("ב", encode("א", v))


def test_segmenter_estimator():
    seg = ProcliticSegmenter().fit()
    out = seg.predict(["שהלך", "מהארוחה"], [probs(SCONJ_SHE=0.9), probs(ADP_MIN=0.9, DET_HE=0.9)])
    assert [r.functions for r in out] == [("SCONJ_SHE",), ("ADP_MIN", "DET_HE")]
    assert seg.get_params() == {"grammar": None}
