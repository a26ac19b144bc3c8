"""Reductions of flat principal bundles through their adjoint bundles.

Run with ``python3 demos/principal_demo.py``.
"""

import numpy as np

from flatbundles import (
    DegreeFunctional,
    MetricField,
    PrincipalBundle,
    ReductiveGroupSpec,
    circle,
    equivalence_check,
    free_abelian,
    he_structure_principal,
    hn_reduction,
    socle_reduction,
)

Z1 = free_abelian(1)
d = DegreeFunctional.abstract([1.0])

gl2 = ReductiveGroupSpec("GL", 2)
hn = hn_reduction(PrincipalBundle(gl2, [np.diag([np.e**2, 1.0])], Z1), d)
print(f"GL2 diag(e^2, 1): HN length {hn.length}, middle term of dim {hn.dim}")
print(np.round(hn.matrices().real, 6))

sl2 = ReductiveGroupSpec("SL", 2)
soc = socle_reduction(PrincipalBundle(sl2, [np.array([[1.0, 1.0], [0.0, 1.0]])], Z1), d)
print(f"SL2 unipotent: socle ranks {soc.ranks}, middle term of dim {soc.dim}")

real = PrincipalBundle(ReductiveGroupSpec("SL", 2, "R"), [np.array([[1.0, 1.0], [0.0, 1.0]])], Z1)
print("SL2(R) unipotent vs complexification:", equivalence_check(real, d))

s1 = circle(64)
g = MetricField.constant_metric(s1, np.eye(1))
e = PrincipalBundle(ReductiveGroupSpec("SL", 2, "R"), [np.diag([np.e, 1 / np.e])], s1)
rep = he_structure_principal(e, DegreeFunctional.numeric(s1, g), g)
print(f"SL2(R) diag over the circle: central residual {rep.central_residual:.1e}, "
      f"bracket residual {rep.bracket_residual:.1e}, passed {rep.passed}")
