"""Tuning toolkit for parameterized algorithm families.

Subpackages/modules
-------------------
instances : problem-instance types, seeded generators, JSON I/O
linkage   : merge families M1/M2/M3, agglomerative trees, pruning, Hamming utility
ssl       : RBF graph construction and the harmonic label-propagation solver
logreg    : regularized logistic regression, approximate regularization paths
bounds    : pseudo-dimension / sample-complexity bound calculators and the
            instantiated parameter-tuple catalog
tune      : batch ERM tuning over hyperparameter grids, 1-D refinement,
            uniform-convergence reports
online    : exponentially-weighted forecasters, regret accounting, dispersion
cli       : config-driven experiment runner
acceptance: end-to-end acceptance criteria behind `algotune acceptance`
kernels   : compiled hot loops with a pure-Python fallback
"""

__version__ = "0.1.0"
