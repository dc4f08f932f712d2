"""Phoneme n-gram domain-mismatch measurement for unsupervised ASR corpora."""

__version__ = "0.1.0"
