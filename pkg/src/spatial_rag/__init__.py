"""Spatial retrieval-augmented generation over a live linked-data entity store.

The package is organised around a small in-memory context broker that speaks
an NGSI-LD-style entity document format, answers rectangular geo queries with
attribute filters, and pushes change notifications to subscribers.  On top of
it sit a retrieval + prompt-assembly pipeline with pluggable chat backends,
an update simulator, a benchmark harness, and an HTTP service facade.
"""

__version__ = "0.1.0"
