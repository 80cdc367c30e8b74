"""Feature-based clinical relation extraction.

Modules: ``corpus`` (documents, BIO, file formats), ``syntax`` (dependency
trees and pruning), ``embeddings``, ``features``, ``fcnn`` (the classifier),
``pipeline``, ``evalbench``, ``downstream`` (graphs, timelines, code
resolution) and ``cli``.
"""

from .corpus import CandidatePair, Document, EntityChunk, chunks_from_bio, read_conll, tokenize
from .embeddings import EmbeddingTable, cosine_similarity, load_text_embeddings
from .features import FeatureConfig, build_features, feature_length
from .fcnn import FcnnModel, TrainConfig, load_model, predict, save_model, train
from .pipeline import PipelineConfig, RelationSchema, extract_relations, extract_relations_batch, generate_pairs
from .syntax import DependencyTree, prune_pairs, syntactic_distance

__version__ = "0.1.0"

__all__ = [
    "CandidatePair", "Document", "EntityChunk", "chunks_from_bio", "read_conll", "tokenize",
    "EmbeddingTable", "cosine_similarity", "load_text_embeddings",
    "FeatureConfig", "build_features", "feature_length",
    "FcnnModel", "TrainConfig", "load_model", "predict", "save_model", "train",
    "PipelineConfig", "RelationSchema", "extract_relations", "extract_relations_batch", "generate_pairs",
    "DependencyTree", "prune_pairs", "syntactic_distance",
]
