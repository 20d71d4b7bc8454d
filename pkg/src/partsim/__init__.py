"""Simulation and numerical checks for exchangeable random partitions and coalescents."""
from .errors import (CapacityError, ConfigurationError, ConstructionError, DomainError,
                     IntegrityError, ModelError, NumericalError, PartsimError, SchemaError)
from .freq import (AtomGroup, FrequencySequence, SlowlyVaryingFn, counting_function,
                   make_example_bosz, make_example_newex, make_log_law, make_power_law)
from .occupancy import (BlockSpectrum, exact_mean_spectrum, phi, phi_r, sample_fixed,
                        sample_poissonized)
from .coalescent import (LambdaMeasure, MergerHistory, MutationSet, allelic_partition,
                         drop_mutations, lambda_rate, simulate_kingman, simulate_lambda,
                         time_change, total_length, total_length_above)
from .asymptotics import (LimitTarget, coalescent_targets, crp_sample, esf_pmf, gamma_fn,
                          karlin_constants, loglaw_targets, potter_check)

__version__ = "0.1.0"
