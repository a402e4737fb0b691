"""
Sensitivity policies: trading false negatives for false positives
=================================================================

Binary models vote 0 (absent) or 1 (present) per sample. A policy collapses
the N votes into one decision. `any` fires when a single model detects the
target -- the maximum-sensitivity choice -- while `all` demands unanimity
and `at_least` sits anywhere in between.
"""

import itertools

import numpy as np

from ensemblegate import SensitivityPolicy, apply_policy

# Every possible vote column for a 3-model ensemble, combined three ways.
columns = list(itertools.product((0, 1), repeat=3))
votes = np.asarray(columns).T  # one N x B matrix, one column per combination

print("votes      any  all  at_least(2)")
any_out = apply_policy(SensitivityPolicy("any"), votes)
all_out = apply_policy(SensitivityPolicy("all"), votes)
two_out = apply_policy(SensitivityPolicy("at_least", 2), votes)
for column, a, b, c in zip(columns, any_out, all_out, two_out):
    print(f"{list(column)}  {a}    {b}    {c}")

# The ordering any >= at_least(k) >= all holds pointwise: `any` never misses
# a detection that a stricter policy would report.
assert all(a >= c >= b for a, b, c in zip(any_out, all_out, two_out))
print("\nsensitivity ordering holds: any >= at_least(2) >= all on every column")

# The boundary cases collapse into the simpler policies.
assert apply_policy(SensitivityPolicy("at_least", 1), votes) == any_out
assert apply_policy(SensitivityPolicy("at_least", 3), votes) == all_out
print("at_least(1) == any and at_least(3) == all, checked on all 8 columns")
