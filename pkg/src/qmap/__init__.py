"""Rate regions and desk-scale coding simulations for the quantum
multiple-access one-time pad."""

from .qstate import (
    DensityMatrix,
    DimensionError,
    LabelError,
    StateValidationError,
    SystemLayout,
    UnitaryMatrix,
    apply_unitary,
    conditional_entropy,
    conditional_mutual_information,
    embed_operator,
    entropy,
    maximally_mixed,
    mutual_information,
    partial_trace,
    permute_factors,
    pure_state,
    random_density,
    tensor,
    tensor_power,
    trace_distance,
    trace_norm,
)
from .regions import (
    MembershipResult,
    PropertyReport,
    RateRegion,
    SeparationError,
    SetFunction,
    chat_from_state,
    check_set_function_properties,
    contrapolymatroid_vertices,
    dcheck_from_dhat,
    dhat_from_state,
    main_region,
    membership,
    polymatroid_vertices,
    rate_split,
    separate,
)
from .protocols import (
    BudgetError,
    CodeSpec,
    Povm,
    SimulationReport,
    TypicalProjector,
    UnionBoundResult,
    UnitaryFamily,
    build_qmap_code,
    chained_randomization_experiment,
    derived_rng,
    evaluate_code,
    haar_unitary,
    identity_family,
    pauli_family,
    pgm_decoder,
    povm_success,
    randomize,
    sample_family,
    sequential_decoder,
    typical_projector,
    union_bound_check,
    weyl_unitaries,
)
from .presets import ResolvedSpec, SpecError, resolve_state_spec, state_spec_to_json

__version__ = "0.1.0"
