"""Trace extractor for HuggingFace causal LMs speaking the model-runner
wire protocol."""
from .adapter import AdapterConfig, AdapterError, HFAdapter, serve, serve_main
from .stats import head_summary, read_vector_fixture, write_vector_fixture
from .wire import SCHEMA_VERSION, build_record, build_step, encode_record, q9

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "HFAdapter",
    "serve",
    "serve_main",
    "head_summary",
    "read_vector_fixture",
    "write_vector_fixture",
    "SCHEMA_VERSION",
    "build_record",
    "build_step",
    "encode_record",
    "q9",
]
