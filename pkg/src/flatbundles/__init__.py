"""Stability, Hermitian-Einstein metrics and Chern integrals of flat bundles
over compact special flat affine manifolds."""

from .chern import BogomolovReport, bogomolov_ad, bogomolov_value, second_chern_form
from .degree import (
    DegreeFunctional,
    HermitianMetricField,
    admissible_metrics,
    default_metric,
    degree,
    first_chern_form,
    slope,
)
from .errors import *  # noqa: F401,F403
from .flat_rep import (
    AbstractGroup,
    FlatSubbundle,
    Monodromy,
    complexify,
    direct_sum,
    dual,
    free_abelian,
    hom,
    invariant_subspaces,
    is_completely_reducible,
    is_irreducible,
    tensor,
    wedge_power,
)
from .he_flow import (
    FlowReport,
    FlowState,
    chern_curvature,
    connection_distance,
    einstein_constant,
    flat_section_parallel_check,
    flow_run,
    uniqueness_check,
)
from .manifold import (
    AffineManifold,
    MetricField,
    PQForm,
    check_astheno,
    check_gauduchon,
    circle,
    dd_bar,
    dolbeault_d,
    dolbeault_dbar,
    heisenberg,
    torus,
    validate_manifold,
    wedge,
)
from .oracle import oracle_classify, oracle_hn, oracle_socle
from .principal import (
    PrincipalBundle,
    ReductiveGroupSpec,
    ad_bundle,
    complexify_principal,
    equivalence_check,
    he_structure_principal,
    hn_reduction,
    is_polystable_principal,
    is_semistable_principal,
    socle_reduction,
)
from .stability import Verdict, classify, hn_filtration, max_destabilizing, socle, socle_filtration

__version__ = "0.1.0"
