"""Lexical retrieval with graph-based neural re-ranking.

The package covers the full two-stage pipeline: BM25 candidate retrieval,
nearest-neighbour corpus graphs over document embeddings, a message-passing
re-ranking model with hand-written backward passes, pairwise training with
early stopping, TREC-style evaluation, and inference-time ablation of the
graph branch.
"""

from .corpus import (
    Collection,
    Qrels,
    QuerySet,
    RunFile,
    load_collection,
    load_qrels,
    load_queries,
    read_run,
    tokenize,
    write_run,
)
from .embeddings import EmbeddingStore, cosine, load_embeddings, pseudo_encode, save_embeddings
from .gnn import ModelConfig, RerankModel, load_checkpoint, save_checkpoint
from .graph import CorpusGraph, QuerySubgraph, build_corpus_graph, induce_subgraph
from .lexical import InvertedIndex, build_index, load_index, retrieve_topk, save_index
from .metrics import evaluate_run
from .pipeline import QueryInstance, build_instance, build_instances_from_run
from .reranker import GraphNeuralReranker
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Collection",
    "CorpusGraph",
    "EmbeddingStore",
    "GraphNeuralReranker",
    "InvertedIndex",
    "ModelConfig",
    "Qrels",
    "QueryInstance",
    "QuerySet",
    "QuerySubgraph",
    "RerankModel",
    "RunFile",
    "TrainConfig",
    "build_corpus_graph",
    "build_index",
    "build_instance",
    "build_instances_from_run",
    "cosine",
    "evaluate_run",
    "induce_subgraph",
    "load_checkpoint",
    "load_collection",
    "load_embeddings",
    "load_index",
    "load_qrels",
    "load_queries",
    "pseudo_encode",
    "read_run",
    "retrieve_topk",
    "save_checkpoint",
    "save_embeddings",
    "save_index",
    "tokenize",
    "train",
    "write_run",
]
