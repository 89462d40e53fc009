"""Interpretable per-sentence ensembles over LLM and knowledge-graph vectors.

Each training sentence gets a 4-weight linear model fitted against its
similar/dissimilar contexts in two representation streams; the fitted weights
expose which stream drove a decision. See README.md for the workflow.
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
