"""Frozen numerical constants.

LANDAU_LEVEL_FACTOR fixes the level spacing of the squared operator,
lambda = LANDAU_LEVEL_FACTOR * p * (sum_j a_j k_j + sum_{j in J} a_j).  It was
set once by matching the finite-difference oracle at n = 1, p = 1, 2 and is
re-checked by the test suite.
"""
EULER_GAMMA = 0.57721566490153286061
ZETA_AT_ZERO = -0.5
ZETA_PRIME_AT_ZERO = -0.91893853320467274178  # -ln(2 pi)/2
LANDAU_LEVEL_FACTOR = 2
