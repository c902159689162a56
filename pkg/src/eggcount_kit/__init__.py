"""Faecal egg count reduction analysis: the classical FECRT and a paired
hierarchical Bayesian model fitted by Gibbs sampling with Metropolis steps."""

__version__ = "0.1.0"
