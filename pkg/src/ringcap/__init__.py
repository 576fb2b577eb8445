"""Variational p-capacities of ring condensers, distortion norms of mappings,
and numerical checks of capacity inequalities."""
from .capacity import (CapacityResult, CondenserTooThin, SolverOptions, cap_lower_bound_diam,
                       cap_lower_bound_measure, cap_numeric, cap_radial_closed_form,
                       cap_radial_oracle, cap_upper_bound, capacity, p_energy)
from .capmetric import (capacitary_distance, check_lipschitz, check_metric_axioms,
                        curve_capacity, duality_exponents)
from .geometry import (BoxCondenserParams, Grid, ImplicitSet, RingCondenser, ball, box,
                       make_ball_ring, make_box_condenser, measure, plate, preimage,
                       pullback_condenser)
from .inequalities import (CondenserSampler, box_partition, density_quotients, psi_estimate,
                           variation_estimate, verify_ring_pp, verify_ring_pq)
from .mappings import (MappingSpec, composed, dilatation_p, distortion_norm, identity, linear,
                       parse_mapping, radial_stretch, unit_disk, unit_square)

__version__ = "0.1.0"
