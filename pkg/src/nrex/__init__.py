"""Document-level N-ary relation extraction over text and tables.

The package splits the task in two stages: a retriever ranks document
components (paragraphs and tables) for a query, then an extractor picks
the answer entity inside the retrieved component using a cross-modal
entity graph, neighborhood features and a small attention network.
"""

__version__ = "0.1.0"
