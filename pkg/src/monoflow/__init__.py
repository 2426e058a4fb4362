"""monoflow: spectral flow and Fredholm indices for monopole insertions
into finite-volume tight-binding Hamiltonians."""

from .clifford import CliffordRep, PinLift, build_clifford, pin_lift
from .lattice import (LatticeBox, LatticeOperator, dirac_operator,
                      dirac_phase, hardy_projection, make_box, shift_pairs,
                      split_F)
from .monopole import (CacheSweep, GaugeField, PhaseCache, build_phase_cache,
                       build_transport_plan, closed_phases_d2,
                       covariance_check, gauge_potential, identity_suite,
                       load_phase_cache, monopole_shift, phase_matrix,
                       signed_permutations, transport)
from .models import (EvenDiracModel, HamiltonianPath, ModelSpec,
                     OddChiralModel, build_even_dirac, build_odd_chiral,
                     build_polynomial, build_ssh, chirind_example_path,
                     chirind_ring_path, critical_masses, dispersion_gap)
from .flow import (EigenPath, FlowError, FlowResult, haar_unitary,
                   polar_homotopy, random_signature_unitary, sf_nonnormal,
                   sf_selfadjoint, sf_unitary, standard_unitary_path)
from .index import (GaplessSpectrumError, IndexResult, chern_oracle_even,
                    even_flux_unitary, fedosov_index, fermi_projection,
                    index_compression, kernel_count, winding_oracle_odd)

__version__ = "0.1.0"
