"""critmet: quantum Fisher information of critical-metrology protocols on
fully-connected models.

Submodules
----------
models    parameter sets, model reductions, coupling schedules, chain rule
gaussian  thermodynamic-limit squeezing dynamics and squeezed-state QFI
bounds    precision bound for time-dependent quadratic Hamiltonians
fock      finite-size simulation in a truncated number basis
scaling   exponent fits, regime boundaries, Kibble-Zurek predictions
harness   sweep configs, CSV/manifest output, fit/verify passes
"""

__version__ = "0.1.0"

from .models import (AdiabaticRamp, DirectParams, EffectiveParams,
                     EstimandTag, FiniteRamp, INFINITE_ETA, LMGParams,
                     QuantumRabiParams, QuarticKind, SuddenQuench,
                     chain_rule, estimand, map_direct, map_lmg,
                     map_quantum_rabi, rabi_coupling_for_g, schedule_value)
from .gaussian import (BlowUpError, SensitivityState, SqueezingState,
                       Trajectory, evolve_b, evolve_sensitivity,
                       evolve_sensitivity_many, ground_state_b,
                       photon_number, qfi_squeezed, quench_b_exact, snr,
                       squeezed_overlap)
from .bounds import (BoundReport, QuadraticForm, bound_for_estimand,
                     displaced_bound, estimand_form, general_bound,
                     mx_eigenvalues, quench_bound_closed, variance_quadratic)
from .fock import (BandedHamiltonian, FockVector, TruncationOverflow,
                   build_hamiltonian, gap_converged, ground_and_gap,
                   ground_state_qfi, observables_fock, propagate, qfi_fock,
                   vacuum)
from .scaling import (EXPONENTS, FreezeOut, RegimeReport, ScalingFit,
                      fit_exponent, freeze_out, kz_exponent, local_exponent,
                      regime_boundaries, saturation_qfi)

__all__ = [name for name in dir() if not name.startswith("_")]
