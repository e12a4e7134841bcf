"""Event-driven simulation and grazing analysis of vibro-impact systems.

Modules
-------
core         system definitions, the impact rule, the forced linear oscillator
integrator   flight/impact/sticking simulation and the stroboscopic shift map
variational  saltation matrices and shift-map Jacobians
grazing      grazing location, separatrix sampling, chaos-condition checker
chaos        invariant manifolds, homoclinic points, covering boxes, itineraries
soft         penalty (stiff spring) contact model and its convergence checks
cli          command-line front end (``vibroimpact`` console script)
"""

from .core import (ForcedLinearOscillator, ImpactError, SystemDef, apply_impact,
                   oscillator_fundamental, oscillator_modes, oscillator_periodic,
                   periodic_positivity_margin)
from .integrator import (DEFAULT_SETTINGS, ChatterError, ImpactEvent, IntegrationError,
                         IntegrationSettings, Segment, Trajectory, integrate_flight, iterate_map,
                         shift_map, simulate, write_impacts_csv, write_trajectory_csv)
from .variational import (GrazingError, MonodromyReport, SaltationMatrix,
                          dominant_eigenvalue_asymptote, fd_shift_map_jacobian, fit_power_law,
                          saltation, shift_map_jacobian, trajectory_jacobian)
from .grazing import (ConvergenceError, GrazingLocation, GrazingReport, SeparatrixModel,
                      analyze_conditions, choose_theta, find_grazing_parameter,
                      find_impact_orbit, find_periodic_orbit, limiting_matrix,
                      sample_separatrix, separatrix_threshold)
from .soft import (AnomalousBounceError, BounceRecord, ConjugacyTable, PenaltySettings,
                   bounce_map_error, conjugacy_check, fit_error_slope, in_wall_closed_form,
                   integrate_soft, penalty_force, soft_shift_map)
from .chaos import (AffineHorseshoe, ChaosError, CoveringBoxes, HomoclinicPoint, InverseOf,
                    LinearMap, ManifoldArc, NoIntersectionError, PlanarMap, ShiftMap,
                    build_boxes, find_homoclinic, grow_manifold, realize_itinerary,
                    unit_shift_holds, verify_covering)

__version__ = "0.1.0"
