"""Speaker-verification back-end with domain-mismatch compensation.

LDA/SVDA projection, two-covariance PLDA, clustering of unlabeled in-domain
data, PAV calibration, logistic-regression fusion and NIST-style metrics.
Embeddings are plain numeric vectors; a seeded generator supplies synthetic
corpora.
"""

__version__ = "0.1.0"
