"""Power-distribution sampling over autoregressive token models.

Metropolis-Hastings samplers with uniform and entropy-guided cut laws, SMC and
twisted-MC baselines, synthetic reasoning trees, and a brute-force oracle for
exact distributions, kernels and mixing times.
"""

from .cuts import EntropyCut, UniformCut, entropy_cut_weights, sample_cut, uniform_cut_weights
from .diagnostics import (decile_resample_experiment, distinct_answer_fraction, levenshtein,
                          normalized_edit_distance, pass_at_k)
from .errors import (BackendError, BudgetExceeded, CapabilityError, ConfigError,
                     DegeneracyError, InputError, ModelError, PowerSampleError, ProtocolError,
                     TransportError, UnsupportedError, ValidationError)
from .mh import (ChainState, ProposalRecord, StageConfig, acceptance_probability,
                 entropy_cut_mh, mh_step, propose, run_chains, run_stagewise, uniform_cut_mh)
from .models import (LowTemperatureModel, PromptedModel, TabularModel, TokenModel,
                     avg_confidence, entropy_jumps, entropy_profile, low_temperature_model,
                     random_tabular_model, sample_autoregressive, seq_logprob)
from .oracle import (ExactDistribution, conductance, empirical_distribution,
                     enumerate_power_distribution, exact_low_temperature_distribution,
                     exact_mh_kernel, m1_constant, minorization_margin, mixing_time,
                     prop_a1_construct, tv_distance)
from .remote import LoopbackServer, RemoteModel, RemoteModelConfig
from .smc import (TmcParams, effective_sample_size, resample_systematic, smc_sample,
                  tmc_sample)
from .tree import (ReasoningTree, SymmetricTreeSpec, build_symmetric_tree, classify_positions,
                   path_index_maps)

__version__ = "0.1.0"
