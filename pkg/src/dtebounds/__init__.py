"""Sharp identified intervals for distributional treatment-effect parameters.

Combines a randomized arm with a self-selection arm to bound parameters of
the joint law of potential outcomes (share who benefit, effect-CDF values,
effect correlation, ...) that no single arm point-identifies.
"""

from .analytic import (
    BoundsInterval,
    FrechetEnvelope,
    antimonotone_expectation,
    comonotone_expectation,
    frechet,
    frechet_lower,
    frechet_upper,
    gain_diagnostic,
    indicator_interval,
    makarov_interval,
    phi_indicator_bounds,
    supermodular_bounds,
)
from .data import (
    Dataset,
    ObservationRecord,
    OutcomeGrid,
    StepCdf,
    build_grid,
    empirical_step_cdf,
    load_csv,
    validate_overlap,
    write_csv,
)
from .errors import (
    DataError,
    DteBoundsError,
    InfeasibleModelError,
    OverlapError,
    SolverError,
    ValidationError,
)
from .estimands import (
    NuisanceSet,
    Population,
    PsiSpec,
    PsiTable,
    classify_shape,
    estimate_nuisances,
    materialize_psi,
    parse_population,
    parse_psi,
    population_weight,
)
from .estimator import DteBoundsEstimator, __version__, as_dataset
from .identify import (
    IdentifiedCdfSystem,
    MarginSet,
    cdf_given_selection,
    identify_system,
    margins_pmf,
    selection_prob,
)
from .lp import ConstraintOptions, LpProblem, SolveReport, build_lp, sharp_bounds_lp, solve_lp
from .oracles import (
    BlockUniformPopulation,
    SyntheticPopulation,
    block_uniform_population,
    discretize_population,
    independent_selection_population,
    makarov_scan_oracle,
    permutation_oracle,
    population_dataset,
    random_population,
    reference_lp_value,
    sample_drpt,
)

__all__ = [name for name in dir() if not name.startswith("_")]
