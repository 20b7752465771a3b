"""poisonsim: desk-scale study of data poisoning against a PE malware detector.

The package covers the full loop: synthetic PE corpus generation, fuzzy-hash
deduplication, three-view static feature extraction, in-repo tree-ensemble
learners, a genetic evasion attack over functionality-preserving binary
rewrites, and a consensus-filtered ingestion pipeline with retraining
reports.
"""

__version__ = "0.1.0"
