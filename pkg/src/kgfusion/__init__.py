"""Zero-shot retrieval fusing knowledge-graph embedding MaxSim scores with BM25."""

from .bm25 import Bm25Params, BM25Retriever, InvertedIndex, bm25_score, bm25_topk, build_index, read_corpus
from .embeddings import EmbeddingTable, load_embeddings, save_embeddings
from .evaluation import evaluate, load_qrels, mrr, ndcg_at_k, precision_at_k, recall_at_k
from .keywords import KeywordExtractor, cosine, extract_keywords
from .kg import KnowledgeGraph, link_term, load_kg
from .node2vec import Node2VecEmbedder
from .oov import CharLSTMRegressor, PrefixApproximator, oov_embed
from .retriever import FusionRanker, fuse, maxsim_score

__version__ = "0.1.0"

__all__ = [
    "BM25Retriever", "Bm25Params", "CharLSTMRegressor", "EmbeddingTable", "FusionRanker",
    "InvertedIndex", "KeywordExtractor", "KnowledgeGraph", "Node2VecEmbedder",
    "PrefixApproximator", "bm25_score", "bm25_topk", "build_index", "cosine", "evaluate",
    "extract_keywords", "fuse", "link_term", "load_embeddings", "load_kg", "load_qrels",
    "maxsim_score", "mrr", "ndcg_at_k", "oov_embed", "precision_at_k", "read_corpus", "recall_at_k",
    "save_embeddings",
]
