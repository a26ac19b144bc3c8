"""Slope stability of a few flat bundles with abstract degrees.

Run with ``python3 demos/stability_tour.py``.
"""

import numpy as np

from flatbundles import (
    DegreeFunctional,
    Monodromy,
    classify,
    free_abelian,
    hn_filtration,
    oracle_hn,
    socle,
    socle_filtration,
)

E = np.e
Z1 = free_abelian(1)
d = DegreeFunctional.abstract([1.0])

# three characters of different size: a three-step HN flag
v = Monodromy([np.diag([E**3, E, E**-4])], Z1)
f = hn_filtration(v, d)
print("diag(e^3, e, e^-4):", classify(v, d).value, "HN ranks", f.ranks, "slopes", np.round(f.slopes, 12))
ranks, _, slopes = oracle_hn(v, [1.0])
print("  brute-force oracle:", ranks, np.round(slopes, 12))

# a Jordan block is semistable but its socle is the eigenline
j = Monodromy([np.array([[1.0, 1.0], [0.0, 1.0]])], Z1)
print("Jordan block:", classify(j, d).value, "socle rank", socle(j, d).rank,
      "socle ranks", socle_filtration(j, d).ranks)

# an irreducible real rotation is stable over R and splits over C
a = 2 * np.pi / 5
R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
print("rotation over R:", classify(Monodromy([R], Z1, "R"), d).value)
print("rotation over C:", classify(Monodromy([R], Z1, "C"), d).value)
