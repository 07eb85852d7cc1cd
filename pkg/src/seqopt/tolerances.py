"""Numerical tolerances shared by every module.

One place, one value each. These are absolute tolerances: the package works
with probability-scale quantities, and the test surface pins instances where
the relevant magnitudes are O(1) down to O(1e-6). States whose joint density
has decayed below TIE_ATOL may classify as ties spuriously; their contribution
to any risk functional is bounded by TIE_ATOL per state, which the stop/continue
tie-policy equivalence tolerance (1e-9) absorbs on desk-scale instances.
"""

# Probability vectors (pmf rows, priors) must sum to 1 within this.
NORM_ATOL = 1e-9

# Two stage losses / values closer than this are a tie.
TIE_ATOL = 1e-12

# A rule's stopping mass under pi2 must be within this of 1 for the combined
# risk to be reported finite at the evaluation cap.
STOP_MASS_ATOL = 1e-9

# Forward-recursion mass below this is pruned (denormal guard).
PRUNE_EPS = 1e-300
