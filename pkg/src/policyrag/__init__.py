"""policyrag: retrieval-augmented QA workbench for chunked policy corpora."""

__version__ = "0.1.0"
