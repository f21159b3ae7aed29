"""Hebrew pre-training data pipeline and morphosyntactic decoders."""
from .cleaner import CharTrigramScorer, CleanReport, CorpusCleaner, Document, FilterConfig, clean_corpus
from .metrics import QaPrediction, accuracy, mset_f1, qa_em_f1, token_f1
from .mlm import BuilderConfig, BuildReport, MLMInstanceBuilder, TrainingInstance, build
from .morph import LogitBundle, MorphTagger, WordAnalysis, decode_sentence, decode_word
from .pretokenizer import PreToken, normalize, pretokenize
from .proclitic import ProcliticGrammar, ProcliticSegmenter, SegmentationResult, brute_force_decode, decode
from .wordpiece import MatchTrie, TokenizedText, Vocabulary, WordPieceTokenizer, build_trie, encode, train_vocab

__version__ = "0.1.0"

__all__ = [
    "BuildReport", "BuilderConfig", "CharTrigramScorer", "CleanReport", "CorpusCleaner", "Document",
    "FilterConfig", "LogitBundle", "MLMInstanceBuilder", "MatchTrie", "MorphTagger", "PreToken",
    "ProcliticGrammar", "ProcliticSegmenter", "QaPrediction", "SegmentationResult", "TokenizedText",
    "TrainingInstance", "Vocabulary", "WordAnalysis", "WordPieceTokenizer", "accuracy", "brute_force_decode",
    "build", "build_trie", "clean_corpus", "decode", "decode_sentence", "decode_word", "encode", "mset_f1",
    "normalize", "pretokenize", "qa_em_f1", "token_f1", "train_vocab",
]
