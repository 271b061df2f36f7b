"""Fisher-information limits for qubit frequency estimation under monitored noise.

Three tiers of quantum Fisher information for an N-qubit frequency probe with
independent Markovian dephasing or transverse noise:

* unconditional: QFI of the master-equation solution;
* effective: record Fisher information plus mean conditional QFI under
  continuous photodetection or homodyne monitoring, estimated by Monte-Carlo
  over stochastic trajectories;
* ultimate: QFI with full access to the environment, from the two-frequency
  generalized map (numeric stencil and closed forms).
"""

__version__ = "0.1.0"

from ._kernels import backend_name  # noqa: F401
from .errors import NumericalGuardError, StepSizeError  # noqa: F401
from .estimator import (  # noqa: F401
    EffectiveQfiEstimate,
    convergence_report,
    effective_qfi,
    maximize_q_over_t,
    monotonicity_check,
)
from .lindblad import (  # noqa: F401
    QfiCurve,
    ghz_ultimate_qfi,
    parallel_ultimate_qfi,
    propagate_unconditional,
    transverse_optimal_time,
    transverse_ultimate_qfi,
    ultimate_qfi_numeric,
    unconditional_qfi,
    unconditional_qfi_curve,
)
from .model import FrequencyModel, NoiseAxis, coherent_spin_state, ghz_state  # noqa: F401
from .qops import hermitian_eig, qfi_mixed, qfi_pure  # noqa: F401
from .trajectories import (  # noqa: F401
    MeasurementRecord,
    TrajectoryState,
    UnravelingSpec,
    ghz_parallel_pd_step,
    homodyne_step_mixed,
    homodyne_step_pure,
    photodetection_step_mixed,
    photodetection_step_pure,
    run_trajectory,
)
