"""
Mallows Avoid

Simulation and numerics for Mallows random permutations conditioned to avoid a
pattern of length 3: a tilted Dyck-path Metropolis sampler, exhaustive small-n
oracles, exact and log-space partition functions, and the permuton limit shapes.
"""

__version__ = "0.1.0"
