"""Export frozen transformer embeddings into the TGEB binary format."""

from .export import ExportConfig, ExportError, ExportReport, embed_essay, export
from .formats import EmbeddedEssay, Essay, FormatError, read_essays_jsonl, write_tgeb

__version__ = "0.1.0"
