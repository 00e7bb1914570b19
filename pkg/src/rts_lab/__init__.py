"""rts-lab: phase transitions of recursive tree systems on Galton-Watson trees."""

from .core import (
    ChildDistribution,
    NumericError,
    PoissonFamily,
    RecursiveTreeSystem,
    SystemFamily,
    ThresholdFunction,
    ValidationError,
    from_formula,
    m_truncation,
    make_system,
    parse_family,
    parse_system,
    poisson_truncated,
    system_to_document,
    tiers_of,
)
from .admap import (
    AdmMap,
    ConcordanceClass,
    bg,
    be,
    concordance,
    deriv_at,
    derivs_at_zero,
    is_m_concordant,
    power_coeffs,
    psi,
    psi_grid,
)
from .fixedpoint import (
    FixedPoint,
    FixedPointReport,
    TransitionFinding,
    find_fixed_points,
    find_tangency,
    full_report,
    interpretable,
    is_critical,
    iterate_psi,
)
from .critmeasure import (
    CritSpec,
    Decomposition,
    crit_measure,
    crit_measure_mc,
    decompose,
    martingale_mean,
    phi,
    rn_distribution,
    tail_decomposition,
    with_fixed_point,
)
from .simulate import (
    EventEstimate,
    SampledTree,
    estimate_admissible,
    estimate_bounded_tier,
    has_admissible,
    min_level_size_tree,
    min_level_sizes,
    recursion_growth,
    sample_tree,
)

__version__ = "0.1.0"
