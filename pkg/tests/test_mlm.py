import json

import numpy as np
import pytest

from hebprep.cleaner import Document
from hebprep.mlm import (
    BuilderConfig, BuildReport, MLMInstanceBuilder, TrainingInstance, apply_masking, build, insert_blank,
    mask_count, original_ids, pack_instances, reject_unk, select_mask_candidates, split_sentences,
)
from hebprep.wordpiece import TokenizedText, decode_words


def fake_sentence(vocab, n_words, pieces_per_word=1, start=10):
    ids, widx, first = [], [], []
    for w in range(n_words):
        for k in range(pieces_per_word):
            ids.append(start + (w + k) % 50)
            widx.append(w)
            first.append(k == 0)
    t = TokenizedText(ids, widx, first, [(0, 1)] * len(ids))
    t.pretokens = [None] * n_words
    return t


class TestSplitSentences:
    def test_two(self):
        assert split_sentences("Abc def. Ghi jkl.") == ["Abc def.", "Ghi jkl."]

    def test_hebrew(self):
        assert split_sentences("הילד הלך. הוא חזר! מה? כן") == ["הילד הלך.", "הוא חזר!", "מה?", "כן"]

    def test_abbreviation_not_split(self):
        assert split_sentences('חיילי צה"ל הגיעו לגבול') == ['חיילי צה"ל הגיעו לגבול']

    def test_no_terminal(self):
        assert split_sentences("no terminal punctuation here") == ["no terminal punctuation here"]

    def test_lowercase_after_period(self):
        assert split_sentences("e.g. this stays") == ["e.g. this stays"]

    def test_sof_pasuq(self):
        assert split_sentences("בראשית ברא׃ והארץ היתה") == ["בראשית ברא׃", "והארץ היתה"]

    def test_empty(self):
        assert split_sentences("   ") == []


class TestPack:
    def test_100_100_100(self, small_vocab):
        # [CLS] + 101 + 101 = 203 <= 256; adding 101 more would give 304
        sents = [fake_sentence(small_vocab, 100) for _ in range(3)]
        out = pack_instances(sents, 256, small_vocab)
        assert [i.sentence_count for i in out] == [2, 1]
        assert [len(i) for i in out] == [203, 102]

    def test_oversize_dropped(self, small_vocab):
        report = BuildReport()
        out = pack_instances([fake_sentence(small_vocab, 600)], 512, small_vocab, report=report)
        assert out == [] and report.dropped_oversize == 1

    def test_exact_fit(self, small_vocab):
        out = pack_instances([fake_sentence(small_vocab, 510)], 512, small_vocab)
        assert len(out) == 1 and len(out[0]) == 512
        report = BuildReport()
        assert pack_instances([fake_sentence(small_vocab, 511)], 512, small_vocab, report=report) == []
        assert report.dropped_oversize == 1

    def test_empty(self, small_vocab):
        assert pack_instances([], 512, small_vocab) == []

    def test_layout(self, small_vocab):
        out = pack_instances([fake_sentence(small_vocab, 2), fake_sentence(small_vocab, 3)], 64, small_vocab)
        ids = out[0].token_ids
        assert ids[0] == small_vocab.cls_id and ids[3] == small_vocab.sep_id and ids[-1] == small_vocab.sep_id
        assert out[0].word_ids == [-1, 0, 1, -1, 2, 3, 4, -1]


class TestCandidates:
    def test_all_single(self, small_vocab):
        inst = pack_instances([fake_sentence(small_vocab, 5)], 64, small_vocab)[0]
        assert select_mask_candidates(inst) == [1, 2, 3, 4, 5]

    def test_multi_piece_excluded(self, small_vocab):
        inst = TrainingInstance([2, 10, 11, 12, 13, 3], [-1, 0, 0, 0, 1, -1], [3, 1])
        assert select_mask_candidates(inst) == [4]

    def test_only_multi_piece(self, small_vocab):
        inst = pack_instances([fake_sentence(small_vocab, 4, pieces_per_word=2)], 64, small_vocab)[0]
        assert select_mask_candidates(inst) == []
        masked = apply_masking(inst, BuilderConfig(), small_vocab, np.random.default_rng(0))
        assert masked.mlm_positions == [] and masked.token_ids == inst.token_ids


class TestMasking:
    def test_rounding(self):
        assert mask_count(0.15, 20) == 3
        assert mask_count(0.15, 10) == 2  # 1.5 -> 2 (half to even)
        assert mask_count(0.5, 5) == 2  # 2.5 -> 2
        assert mask_count(0.15, 0) == 0

    def test_twenty_candidates(self, small_vocab):
        inst = pack_instances([fake_sentence(small_vocab, 20)], 64, small_vocab)[0]
        out = apply_masking(inst, BuilderConfig(), small_vocab, np.random.default_rng(3))
        assert len(out.mlm_positions) == 3
        assert out.mlm_labels == [inst.token_ids[p] for p in out.mlm_positions]
        changed = [p for p in range(len(inst)) if out.token_ids[p] != inst.token_ids[p]]
        assert set(changed) <= set(out.mlm_positions)

    def test_deterministic(self, small_vocab):
        inst = pack_instances([fake_sentence(small_vocab, 40)], 64, small_vocab)[0]
        a = apply_masking(inst, BuilderConfig(), small_vocab, np.random.default_rng([5, 1]))
        b = apply_masking(inst, BuilderConfig(), small_vocab, np.random.default_rng([5, 1]))
        assert a == b

    def test_replacement_split(self, small_vocab):
        inst = pack_instances([fake_sentence(small_vocab, 200)], 256, small_vocab)[0]
        cfg = BuilderConfig(mask_rate=1.0, max_len=256)
        rng = np.random.default_rng(11)
        n_mask = n_same = n_total = 0
        for _ in range(50):
            out = apply_masking(inst, cfg, small_vocab, rng)
            for p in out.mlm_positions:
                n_total += 1
                n_mask += out.token_ids[p] == small_vocab.mask_id
                n_same += out.token_ids[p] == inst.token_ids[p]
        assert abs(n_mask / n_total - 0.8) < 0.02
        # kept-as-is plus random picks that happen to hit the same id
        assert 0.08 < n_same / n_total < 0.13
        assert all(not small_vocab.is_special(t) or t == small_vocab.mask_id for t in out.token_ids[1:-1])


class TestBlank:
    def _inst(self, vocab, n=10, max_len=64):
        inst = pack_instances([fake_sentence(vocab, n, pieces_per_word=2)], max_len, vocab)[0]
        return apply_masking(inst, BuilderConfig(max_len=max_len), vocab, np.random.default_rng(0))

    def test_never(self, small_vocab):
        inst = self._inst(small_vocab)
        cfg = BuilderConfig(blank_instance_prob=0.0)
        assert insert_blank(inst, cfg, small_vocab, np.random.default_rng(0)) is inst

    def test_always(self, small_vocab):
        inst = self._inst(small_vocab)
        cfg = BuilderConfig(blank_instance_prob=1.0, max_len=64)
        out = insert_blank(inst, cfg, small_vocab, np.random.default_rng(0))
        assert out.has_blank and len(out) == len(inst) + 1
        blank_pos = [p for p, l in zip(out.mlm_positions, out.mlm_labels) if l == small_vocab.blank_id]
        assert len(blank_pos) == 1
        p = blank_pos[0]
        assert out.token_ids[p] == small_vocab.mask_id
        # not inside a word: the neighbours belong to different words or are specials
        left, right = out.word_ids[p - 1], out.word_ids[p + 1]
        assert left == -1 or right == -1 or left != right

    def test_positions_shift(self, small_vocab):
        inst = pack_instances([fake_sentence(small_vocab, 30)], 64, small_vocab)[0]
        inst = apply_masking(inst, BuilderConfig(max_len=64), small_vocab, np.random.default_rng(1))
        out = insert_blank(inst, BuilderConfig(blank_instance_prob=1.0, max_len=64), small_vocab,
                           np.random.default_rng(2))
        assert out.mlm_positions == sorted(out.mlm_positions)
        assert original_ids(out.token_ids, out.mlm_positions, out.mlm_labels, small_vocab.blank_id) == \
            original_ids(inst.token_ids, inst.mlm_positions, inst.mlm_labels, small_vocab.blank_id)

    def test_full_instance_skipped(self, small_vocab):
        inst = pack_instances([fake_sentence(small_vocab, 14)], 16, small_vocab)[0]
        assert len(inst) == 16
        report = BuildReport()
        out = insert_blank(inst, BuilderConfig(blank_instance_prob=1.0, max_len=16), small_vocab,
                           np.random.default_rng(0), report)
        assert not out.has_blank and report.blank_skipped == 1

    def test_intruder_mode(self, small_vocab):
        inst = self._inst(small_vocab)
        cfg = BuilderConfig(blank_instance_prob=1.0, blank_mode="intruder")
        out = insert_blank(inst, cfg, small_vocab, np.random.default_rng(4))
        p = out.mlm_positions[out.mlm_labels.index(small_vocab.blank_id)]
        tok = small_vocab.tokens[out.token_ids[p]]
        assert not tok.startswith("##") and not small_vocab.is_special(out.token_ids[p])


class TestRejectUnk:
    def test_with_unk(self, small_vocab):
        inst = TrainingInstance([small_vocab.cls_id, small_vocab.unk_id, small_vocab.sep_id], [-1, 0, -1], [1])
        assert not reject_unk(inst, small_vocab)

    def test_without_unk(self, small_vocab):
        inst = TrainingInstance([small_vocab.cls_id, 10, small_vocab.sep_id], [-1, 0, -1], [1])
        assert reject_unk(inst, small_vocab)

    def test_empty(self, small_vocab):
        assert reject_unk(TrainingInstance([], [], []), small_vocab)


def check_instances(instances, docs, tokenizer, max_len):
    """Invariants every emitted instance must satisfy."""
    vocab = tokenizer.vocab_
    by_id = {d.id: d for d in docs}
    for inst in instances:
        assert len(inst) <= max_len
        assert inst.token_ids[0] == vocab.cls_id and inst.token_ids[-1] == vocab.sep_id
        assert vocab.unk_id not in inst.token_ids
        for p, lab in zip(inst.mlm_positions, inst.mlm_labels):
            if lab == vocab.blank_id:
                continue
            w = inst.word_ids[p]
            assert w >= 0 and inst.word_pieces[w] == 1
        ids = original_ids(inst.token_ids, inst.mlm_positions, inst.mlm_labels, vocab.blank_id)
        segments, cur = [], []
        for t in ids[1:]:
            if t == vocab.sep_id:
                segments.append(cur)
                cur = []
            else:
                cur.append(t)
        assert cur == [] and len(segments) == inst.sentence_count
        sentences = [" ".join(pt.text for pt in tokenizer.encode(s).pretokens)
                     for s in split_sentences(by_id[inst.doc_id].text)]
        decoded = [" ".join(decode_words(vocab, seg)) for seg in segments]
        # consecutive run of whole source sentences
        start = sentences.index(decoded[0])
        assert sentences[start:start + len(decoded)] == decoded


class TestBuild:
    def test_empty(self, tokenizer):
        it, report = build([], tokenizer)
        assert list(it) == [] and report.instances == 0

    def test_invariants(self, corpus, tokenizer):
        it, report = build(corpus, tokenizer, BuilderConfig(max_len=64, seed=3))
        instances = list(it)
        assert report.instances == len(instances) > 0
        check_instances(instances, corpus, tokenizer, 64)

    def test_parse_errors(self, corpus, tokenizer):
        lines = [corpus[0].to_json(), "{not json", json.dumps({"id": "x"}), corpus[1].to_json()]
        it, report = build(lines, tokenizer)
        assert len(list(it)) >= 2 and report.parse_errors == 2

    def test_hand_traced_fixture(self, tokenizer):
        vocab = tokenizer.vocab_
        docs = [
            Document("a", "הילד הלך. המורה כתבה."),
            Document("b", 'שלום צה"ל.'),
            Document("c", "הילד ǂ הלך."),
            Document("d", ""),
            Document("e", "הילד הלך."),
        ]
        # a: 2 sentences in one instance; b, e: 1 each; c: holds [UNK]; d: nothing
        assert vocab.unk_id in tokenizer.encode("ǂ").ids
        cfg = BuilderConfig(max_len=64, blank_instance_prob=0.0, seed=1)
        it, report = build(docs, tokenizer, cfg)
        out = list(it)
        assert [i.doc_id for i in out] == ["a", "b", "e"]
        assert [i.sentence_count for i in out] == [2, 1, 1]
        assert report.documents == 5 and report.sentences == 5
        assert report.instances == 3 and report.dropped_unk == 1 and report.dropped_oversize == 0
        assert report.blanks == 0
        cands = [select_mask_candidates(i) for i in out]
        assert report.candidate_positions == sum(map(len, cands))
        assert report.masked_positions == sum(mask_count(0.15, len(c)) for c in cands)

    def test_deterministic_and_thread_invariant(self, corpus, tokenizer):
        cfg = BuilderConfig(max_len=128, seed=9)
        a = [i.to_json() for i in build(corpus, tokenizer, cfg)[0]]
        b = [i.to_json() for i in build(corpus, tokenizer, cfg)[0]]
        c = [i.to_json() for i in build(corpus, tokenizer, cfg, threads=3, chunk_size=5)[0]]
        assert a == b == c

    def test_seed_matters(self, corpus, tokenizer):
        a = [i.to_json() for i in build(corpus[:50], tokenizer, BuilderConfig(seed=1))[0]]
        b = [i.to_json() for i in build(corpus[:50], tokenizer, BuilderConfig(seed=2))[0]]
        assert a != b

    def test_json_schema(self, corpus, tokenizer):
        inst = next(build(corpus, tokenizer)[0])
        obj = json.loads(inst.to_json())
        assert set(obj) == {"doc_id", "token_ids", "mlm_positions", "mlm_labels", "has_blank"}

    def test_missing_specials(self):
        from hebprep.wordpiece import Vocabulary
        with pytest.raises(ValueError, match="special"):
            build([], Vocabulary(["[UNK]", "a"]))


class TestConfig:
    @pytest.mark.parametrize("kw", [{"max_len": 4}, {"mask_rate": 1.5}, {"replace_probs": (0.5, 0.2, 0.2)},
                                    {"blank_instance_prob": -0.1}, {"blank_mode": "other"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            BuilderConfig(**kw)


class TestEstimator:
    def test_fit_transform(self, corpus, small_vocab):
        b = MLMInstanceBuilder(tokenizer=small_vocab, max_len=128, seed=0)
        out = b.fit_transform(corpus[:20])
        assert len(out) == b.report_.instances > 0

    def test_trains_tokenizer(self, corpus):
        from hebprep.wordpiece import WordPieceTokenizer
        b = MLMInstanceBuilder(tokenizer=WordPieceTokenizer(vocab_size=150, min_char_freq=1), max_len=64)
        b.fit(corpus[:40])
        assert len(b.tokenizer_.vocab_) == 150
        assert len(b.transform(corpus[:5])) > 0
