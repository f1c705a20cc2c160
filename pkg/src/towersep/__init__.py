"""Symmetric exclusion processes on towers of covering graphs.

Simulation and exact verification of the quantities behind local ergodic
behaviour along a tower of finite quotients: Folner averaging, Dirichlet
forms, spectral bounds, and exceedance probabilities of block-average
functionals.
"""

from .groups import TowerSpec, UnsupportedFamilyError
from .towers import (
    FolnerData,
    QuotientGraph,
    TowerSizeError,
    b_index,
    ball,
    build_tower,
    default_time_scale,
    folner_set,
    injectivity_radius,
    max_folner_norm,
)
from .config_space import (
    BernoulliSampler,
    Configuration,
    SmallMeasure,
    bernoulli,
    dirichlet_form,
    group_average,
    is_invariant,
    marginal_on,
    pair_swap,
    periodic_lift,
    restricted_dirichlet,
    swap,
    two_block_forms,
)
from .bundles import (
    EdgeBundle,
    JumpRate,
    VertexBundle,
    builtin_bundles,
    eval_V,
    functional_all_states,
    load_bundle,
    local_average,
    occupancy_average,
    save_bundle,
)
from .dynamics import (
    ExceedanceResult,
    TheoremFunctional,
    TimeScale,
    Trajectory,
    estimate_exceedance,
    integrate_functional,
    integrate_observable,
    replica_rng,
    simulate,
    wilson_interval,
)
from .spectral import (
    FeynmanKacResult,
    GeneratorAction,
    PathLemmaResult,
    SpectralCapError,
    VariationalResult,
    build_generator,
    exceedance_probability,
    feynman_kac,
    inclusion_constant,
    largest_eigenvalue,
    path_lemma_check,
    restricted_variational_check,
    variational_check,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    Report,
    emit_outputs,
    load_config,
    run_folner_report,
    run_one_block,
    run_path_lemma,
    run_spectral_check,
    run_superexp,
    run_two_blocks,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
