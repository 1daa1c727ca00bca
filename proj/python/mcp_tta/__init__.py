"""MCP / MCP++ test-time adaptation over pre-computed embedding streams."""

import json

from ._mcp_tta import (
    ConfigError,
    DataError,
    DegenerateInput,
    Engine,
    InvalidArgument,
    StreamReader,
    StreamWriter,
    compactness,
    gradcheck,
    header_size_bytes,
    pearson,
    record_size_bytes,
    run_json,
    write_synth,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DegenerateInput",
    "Engine",
    "InvalidArgument",
    "StreamReader",
    "StreamWriter",
    "compactness",
    "gradcheck",
    "header_size_bytes",
    "pearson",
    "read_stream",
    "record_size_bytes",
    "run",
    "write_stream",
    "write_synth",
]


def write_stream(path, class_names, prompts, records):
    """Write a header and an iterable of (label or None, views) records."""
    with StreamWriter(path, class_names, prompts) as w:
        for label, views in records:
            w.write(label, views)
        return w.bytes_written


def read_stream(path):
    """Return (header dict, list of (label or None, views)) for a whole file."""
    reader = StreamReader(path)
    records = list(reader)
    return reader.header, records


def run(stream, config=None):
    """Run a stream through a fresh engine and return the summary dict."""
    return json.loads(run_json(stream, config or {}))
