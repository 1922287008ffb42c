"""Grounded retrieval engine: chunking, hybrid BM25 + HNSW retrieval, reranking, cited generation and verification."""

from .config import EngineConfig, load_config, save_config
from .index import HybridIndex
from .ingest import Chunk, ChunkingPolicy, Document, chunk_document, load_document, serialize_rows, tokenize
from .pipeline import Engine, build_index
from .verify import FinalAnswer, SupportPolicy, grounded_answer_loop, split_sentences, support_score

__version__ = "0.1.0"

__all__ = [
    "Chunk", "ChunkingPolicy", "Document", "Engine", "EngineConfig", "FinalAnswer", "HybridIndex", "SupportPolicy",
    "build_index", "chunk_document", "grounded_answer_loop", "load_config", "load_document", "save_config",
    "serialize_rows", "split_sentences", "support_score", "tokenize",
]
