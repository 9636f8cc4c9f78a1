"""Graph parsing with latent concept-to-word alignments.

The alignment between graph concepts and sentence words is a latent
permutation; training maximises a relaxed variational bound in which the
posterior over permutations is a Gumbel-perturbed score matrix pushed
through Sinkhorn normalisation.
"""

from .corpus import CorpusRecord, GeneratorConfig, generate_corpus, load_corpus, save_corpus
from .estimator import LatentAlignmentParser, corpus_scores
from .evaluate import aux_scores, smatch, smatch_exhaustive
from .graph import AmrGraph, Concept, parse_penman, serialize_penman
from .model import EncoderConfig, ParserModel, Vocabulary
from .preprocess import Recategorizer, recategorize, unpack
from .sinkhorn import SinkhornConfig, gumbel_kl, gumbel_sinkhorn, perturb_and_max, sample_gumbel
from .training import MODES, ObjectiveConfig, TrainReport, run_training

__version__ = "0.1.0"

__all__ = [
    "AmrGraph",
    "Concept",
    "CorpusRecord",
    "EncoderConfig",
    "GeneratorConfig",
    "LatentAlignmentParser",
    "MODES",
    "ObjectiveConfig",
    "ParserModel",
    "Recategorizer",
    "SinkhornConfig",
    "TrainReport",
    "Vocabulary",
    "aux_scores",
    "corpus_scores",
    "generate_corpus",
    "gumbel_kl",
    "gumbel_sinkhorn",
    "load_corpus",
    "parse_penman",
    "perturb_and_max",
    "recategorize",
    "run_training",
    "sample_gumbel",
    "save_corpus",
    "serialize_penman",
    "smatch",
    "smatch_exhaustive",
    "unpack",
]
