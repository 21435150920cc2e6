"""Scaling laws for knowledge distillation: accounting, laws, fitting and planning."""

__version__ = "0.1.0"
