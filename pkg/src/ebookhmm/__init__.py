"""Estimate an ebook text from several print transcriptions with a profile HMM."""

from .alphabet import Alphabet, AlphabetPolicy, CharSequence, build_alphabet, default_alphabet, load_corpus, normalize_text
from .inference import Band, StatePath, TrainingTrace, annotate_alignment, backward, baum_welch, consensus, forward, viterbi
from .model import ProfileHmm, PseudocountConfig, build_model, load_model, save_model, validate_model
from .msa import MarkedAlignment, MultipleAlignment, align_sequence_to_profile, barton_sternberg, mark_match_columns
from .pairwise import PairwiseAlignment, ScoringScheme, needleman_wunsch, render_alignment, sequence_identity

__version__ = "0.1.0"
