"""Signal propagation theory, simulation and training for binary-network surrogates.

The package has four layers:

- `bnmf.theory`: closed-form variance/correlation recursions for the
  deterministic Gaussian surrogate of stochastic binary networks, their
  fixed points, the correlation-map slope chi and the depth scales that
  bound trainable depth (plus the continuous tanh baseline).
- `bnmf.ensemble`: Monte-Carlo validation on finite random networks,
  single-layer Jacobian statistics, and direct sampling of the
  stochastic-binary pre-activation field.
- `bnmf.network` / `bnmf.optim` / `bnmf.training`: a from-scratch
  trainable surrogate with exact backprop through the variance
  normalisers, optimizers with mean projection, and training loops.
- `bnmf.data` / `bnmf.cli` / `bnmf.verify`: IDX/MNIST ingestion,
  synthetic datasets, the experiment CLI and the acceptance suite.
"""

from .quadrature import QuadratureRule, default_rule, gauss_hermite_rule
from .theory import (
    DepthScales,
    FixedPointError,
    MfParams,
    RecursionTrace,
    chi,
    chi1_variance_slope,
    continuous_chi,
    continuous_correlation_map,
    continuous_fixed_point_q,
    continuous_variance_map,
    correlation_map,
    depth_scales,
    e_phi2,
    find_c_star,
    first_layer_moments,
    fixed_point_q,
    iterate_theory,
    variance_map,
)
from .ensemble import (
    DegenerateInputError,
    EnsembleConfig,
    EnsembleStats,
    RandomNetwork,
    empirical_moments,
    ensemble_theory_trace,
    forward_fields,
    generate_input_pair,
    jacobian_msv,
    msv_width_sweep,
    run_ensemble,
    sample_network,
    single_layer_jacobian,
    stochastic_binary_field_sample,
)
from .network import (
    ForwardCache,
    GradcheckReport,
    SurrogateNetwork,
    binarize_and_eval,
    forward,
    gradcheck,
    init_network,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
)
from .optim import Adam, Momentum, Sgd, make_optimizer
from .training import TrainConfig, TrainResult, accuracy, train, trainability_grid
from .data import Dataset, load_idx, make_blobs, subsample, write_idx

__version__ = "0.1.0"
