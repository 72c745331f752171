"""embed_export: per-word contextual vectors from a masked-LM encoder,
written as PTVT tables."""

from .align import AlignmentError, SubwordAlignment, align_subwords
from .export import ExportError, ExportReport, export_vectors, load_encoder
from .ptvt import corpus_hash, write_table

__version__ = "0.1.0"
