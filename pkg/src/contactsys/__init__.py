"""Systoles, contact volumes and normal forms for perturbations of regular contact forms."""

from .fields import (ONE, ZERO, DeformationJet, Point, ScalarField, TangentVector, constant,
                     directional_derivative, evaluate, harmonic_field, jet_compose, parse_field)
from .manifolds import (HopfSphere, MetricSpec, UnitCotangentSphere, VolumeScheme, contact_volume, flow,
                        parse_model, quotient_flag, reeb_field, trajectory)
from .averaging import (average_along_flow, hamiltonian_field, normal_form, pullback_oracle,
                        solve_homological)
from .transforms import (funk_transform, metric_to_contact_jet, reparametrize_jet, zero_energy_test)
from .systole import (SearchConfig, find_systole, first_return_action, invariant_upper_bound,
                      noncritical_isosystolic_field, strict_max_experiment, systolic_volume)

__version__ = "0.1.0"
