"""Curriculum-extraction distillation for sparse parities, with exact Boolean-cube diagnostics."""

__version__ = "0.1.0"
