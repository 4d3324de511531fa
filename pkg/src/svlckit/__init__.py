"""svlckit: structured-concept training signal from image-caption datasets.

Generates hard-negative and analogy captions from ordinary pair files,
evaluates the associated contrastive/negatives/analogy losses with exact
gradients, provides low-rank residual adapter algebra with fold-back, and
ships a pos/neg caption evaluation harness.
"""

__version__ = "0.1.0"
