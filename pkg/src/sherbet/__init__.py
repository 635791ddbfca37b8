"""Hierarchy-aware self-supervised graph learning for temporal EHR prediction."""
__version__ = "0.1.0"
