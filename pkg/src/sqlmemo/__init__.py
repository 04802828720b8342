"""Continual text-to-SQL memory pipeline: skeleton extraction, cross-task
component bias, LLM-guided pseudo-sample construction, dual-teacher
distillation losses, and continual-learning metrics."""

__version__ = "0.1.0"
