"""Diversity-regularized deep ensembles for OOD-aware regression.

Small ensembles of heteroskedastic Gaussian networks trained with an
auxiliary penalty that rewards member disagreement across the whole input
space, plus baseline regularizers, OOD evaluation metrics, and a batch-UCB
Bayesian optimization harness over finite candidate pools.
"""

__version__ = "0.1.0"
