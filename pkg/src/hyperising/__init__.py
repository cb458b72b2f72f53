"""Ground states and quantum phase transitions of long-range transverse-field Ising rings."""
from .model import (CouplingSet, GridConvention, SpinConfiguration, WaveVectorGrid, build_power_law_couplings,
                    classical_energy, load_coupling_set, save_coupling_set)
from .classical import ClassicalLevel, enumerate_low_lying, is_stealthy_hyperuniform
from .exact import QuantumState, SpectrumSlice, apply_hamiltonian, degeneracy_gap_check, ground_state
from .observables import (CorrelationMatrix, ObservableRecord, StructureFactorCurve, correlations, h_x,
                          hyperuniformity_s0, magnetizations, stealthiness_s1, structure_factor, tau_metric)
from .fermion import (BogoliubovSolution, EnergyConstant, MeanFieldSolution, TransitionReport, count_transitions,
                      jw_alpha_beta, mean_field_solve, mean_field_transition_count, pairwise_ground_solution,
                      sigma_z_average)
from .ci import CIBasis, CISolution, build_ci_basis, ci_ground, ci_matrix_elements, multi_reference_scan
from .sweep import CriticalInterval, Solver, SweepPlan, detect_critical_intervals, emit_outputs, refine_interval, run_sweep

__version__ = "0.1.0"
