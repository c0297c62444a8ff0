"""Embedding export bridge for the readability pipeline."""

from .export import ExportJob, export_embeddings, read_sentence_csv

__version__ = "0.1.0"
