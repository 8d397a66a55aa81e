"""Backtranslation corpus pipeline for small Japanese-English MT experiments.

The toolkit covers the data side of a backtranslation + fine-tuning workflow:
corpus ingestion and splitting, Japanese/English segmentation, synthetic pair
generation through a pluggable translator backend, quality filtering, training
set assembly, and metric-based evaluation with checkpoint selection. Model
serving and fine-tuning live behind a small wire protocol and are deliberately
not part of this package.
"""

__version__ = "0.1.0"
