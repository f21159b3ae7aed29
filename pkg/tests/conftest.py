import numpy as np
import pytest

from hebprep.cleaner import Document
from hebprep.morph import DEFAULT_SCHEME, LogitBundle
from hebprep.wordpiece import WordPieceTokenizer, train_vocab

LEXICON = (
    "הילד הלך לבית הספר בבוקר עם חבריו הטובים . "
    "המורה כתבה על הלוח שאלה קשה מאוד לכל התלמידים בכיתה . "
    "אתמול ירד גשם חזק בעיר והרחובות היו ריקים לגמרי . "
    "הממשלה החליטה להעלות את המסים בשנה הבאה למרות ההתנגדות . "
    "צה\"ל הודיע כי התרגיל הסתיים בהצלחה ליד הגבול הצפוני . "
    "ג'ירפה גבוהה אכלה עלים מהעץ שבגן החיות הגדול . "
    "שהלך מהארוחה וכשחזר לביתו מצא מכתב ארוך מאחיו . "
    "הסטודנטים למדו במשך שעות רבות לקראת המבחן בספרות עברית . "
    "בתחילת החודש נפתחה תערוכה חדשה במוזיאון לאמנות מודרנית . "
    "הרופאה הסבירה לחולה שעליו לנוח ולשתות הרבה מים . "
    "ע\"י הכביש החדש אפשר להגיע לירושלים תוך שעה בלבד . "
    "צ'יפס חם עם מלח הוא המאכל האהוב על הילדים בשכונה ."
).split()

WORDS = sorted({w for w in LEXICON if w != "."})


def make_sentence(rng: np.random.Generator, n_words: int) -> str:
    idx = rng.integers(len(WORDS), size=n_words)
    return " ".join(WORDS[i] for i in idx) + " ."


def make_doc(rng: np.random.Generator, n_sentences: int, lo: int = 6, hi: int = 14) -> str:
    return " ".join(make_sentence(rng, int(rng.integers(lo, hi + 1))) for _ in range(n_sentences))


def make_corpus(n_docs: int, seed: int = 0, sentences=(2, 5)) -> list[Document]:
    rng = np.random.default_rng(seed)
    return [Document(f"d{i}", make_doc(rng, int(rng.integers(sentences[0], sentences[1] + 1))), "synthetic")
            for i in range(n_docs)]


@pytest.fixture(scope="session")
def corpus():
    return make_corpus(300, seed=1)


@pytest.fixture(scope="session")
def small_vocab(corpus):
    # small enough that many words split into several pieces
    return train_vocab([d.text for d in corpus], target_size=200, min_char_freq=1)


@pytest.fixture(scope="session")
def tokenizer(small_vocab):
    return WordPieceTokenizer(vocab=small_vocab).fit()


def random_bundle(rng: np.random.Generator, ties: bool = False):
    """Random scores for all five heads.  With ``ties`` scores are drawn from
    a handful of integers so argmax ties are common."""
    def draw(n):
        return rng.integers(0, 3, n).astype(float) if ties else rng.normal(0, 3, n)

    s = DEFAULT_SCHEME
    return LogitBundle(
        draw(len(s.pos_tags)),
        rng.random(8),
        {k: draw(len(v)) for k, v in s.features.items()},
        draw(len(s.suffix_functions)),
        {k: draw(len(s.features[k])) for k in s.suffix_features},
    )


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, taken from the ``criterion``
    property each acceptance test records."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" not in getattr(rep, "nodeid", "") or rep.when != "call":
                continue
            props = dict(rep.user_properties)
            line = props.get("criterion") or f"[FAIL] {rep.nodeid} (no result recorded)"
            lines.append((props.get("number", 99), line))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
