"""
Domain modules for the pattern-avoiding Mallows model.

The model is organized into functional domains:
- Core Domain: permutations, length-3 patterns and their statistics
- Dyck Domain: Dyck paths, the two bijections and inversion deltas
- Sampler Domain: the tilted peak/valley Markov chain
- Permuton Domain: excursions, measure pairs, permutons and limit shapes
- Theory Domain: rate functions, actions and partition functions
- Oracle Domain: exhaustive small-n ground truth and validation suites
"""
