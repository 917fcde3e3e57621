"""Martingale and semigroup square functions on finite filtered spaces.

Subpackages are organized by layer: :mod:`probability` (filtrations,
conditional expectations, square functions), :mod:`semigroup` (the
martingale semigroups and their axioms), :mod:`littlewood_paley`
(g-functions and the kernel matrix), :mod:`gamma_construction`
(incomplete-gamma sequences for the vector-valued case), :mod:`nc_matrix`
(tracial matrix algebras) and :mod:`constants_lab` (measured constants).
"""

__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    ConfigurationError,
    ConstructionError,
    DomainError,
    InvariantViolation,
    LPSError,
    RangeError,
)
from .probability import (
    Filtration,
    FiniteMeasureSpace,
    MartingaleFunction,
    condexp,
    dyadic_filtration,
    fixed_projection,
    lp_norm,
    martingale_differences,
    martingale_from_dict,
    martingale_to_dict,
    mdiff,
    random_filtration,
    sample_martingale,
    square_function,
    square_function_from,
    square_function_q,
)
from .semigroup import (
    AxiomReport,
    SubordinationSequence,
    apply_semigroup,
    apply_semigroup_weighted,
    custom_sequence,
    default_t_grid,
    theorem_a_sequence,
    verify_axioms,
)
from .littlewood_paley import (
    LOWER_CONSTANT,
    UPPER_CONSTANT,
    KernelMatrix,
    eigen_range,
    gershgorin_bounds,
    gfunction_closed_form,
    gfunction_quadrature,
    kernel_matrix,
    verify_theorem_a,
)
from .gamma_construction import (
    GammaSequences,
    block_energy,
    gamma_sequences,
    kernel_sum_check,
    lower_constant,
    upper_constant,
    verify_equivalence,
    verify_partition,
)
from .nc_matrix import (
    MatrixAlgebraFiltration,
    hardy_norm,
    nc_condexp,
    nc_gfunction,
    nc_lp_norm,
    nc_square_functions,
    verify_nc_theorem,
)
from .constants_lab import (
    bg_verify,
    envelope,
    growth_report,
    ratio_L,
    search_extremal,
    witness_family,
)
