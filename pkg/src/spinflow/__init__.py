"""Spin-1/2 fluid dynamics: Pauli spinors, Clebsch potentials and their hydrodynamic equations."""

__version__ = "0.1.0"

from .fieldkit import Constants, Grid, SnapshotError, snapshot_read, snapshot_write
from .emfield import EMConfig, harmonic_trap, stern_gerlach, uniform_field
from .spinor import SU2Matrix, angles_from_spinor, bilinear, hopf_map, spinor_from_angles, spinor_rotation
from .clebsch import (PotentialSet, circulation_quantum, connection_field, helicity, hopf_invariant,
                      hopf_texture, internal_potential, momentum_field, vorticity_vector)
from .pauli import PauliState, StabilityError, evolve, initial_state, pauli_step
from .qa import (CausticHalt, CFLError, ClassicalState, NumericalHalt, QAState, classical_limit_step,
                 qa_step, semilinear_step, transport_step)
from .qterms import compute_G_L0, compute_LA, correspondence_check, hydrodynamic_residual, spin_term
from .diagnostics import DiagnosticsRecord, ehrenfest_check, hbar_scan, record_pauli, record_qa

__all__ = [name for name in dir() if not name.startswith("_")]
