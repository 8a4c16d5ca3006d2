"""
relx - Query-only extraction of two-layer ReLU networks from a logit oracle.
"""

__version__ = "0.1.0"
