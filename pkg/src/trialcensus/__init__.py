"""Census of published drug trials: corpus ingestion, candidate screening,
weak-label extraction, distilled classifiers, and trend analytics."""

__version__ = "0.1.0"
