"""linkforge: cross-document sentence linking toolkit.

Pipeline stages: corpus ingestion and semi-synthetic generation, per-sentence
retrieval (BM25 or external embeddings), LLM refinement of candidates,
evaluation against gold links, and an assisted human-labeling service.
"""

__version__ = "0.1.0"
