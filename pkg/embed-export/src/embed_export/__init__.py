"""Corpus-to-embedding bridge for the relation extraction pipeline.

Reads a corpus file, runs every component, entity mention, query and
query element through a transformer encoder, and writes the JSONL
embedding format the extraction package loads. The two packages share
nothing but the file formats.
"""

__version__ = "0.1.0"
