"""Evaluate discrete speech codes against phoneme annotations.

Four metrics are provided: normalized mutual information, diagnostic
classifiers, representational similarity analysis and minimal-pair ABX,
together with the edit-distance kernel, synthetic corpora and moment
statistics they rely on.
"""

__version__ = "0.1.0"
