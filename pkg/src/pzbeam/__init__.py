"""Coupled piezo-elastodynamic simulation of a cantilever beam with a
bonded piezoelectric disc sensor, plus identification of damping, elastic
and circuit parameters from transient measurements."""

from .assembly import (AssembledSystem, ConstrainedSystem, apply_constraints,
                       assemble, electrode_charge, energy_audit,
                       von_mises_from_stress)
from .config import RunConfig
from .errors import ConfigError, MeshError, MeshParseError, NumericalError
from .identify import (ForwardModel, IdentResult, identify_cmaes,
                       identify_lsq, identify_sequential, objective,
                       residuals_and_jacobian)
from .materials import (BeamGeometry, CircuitParams, ElasticMaterial,
                        ParameterVector, PiezoMaterial, PIC181,
                        RayleighDamping, REFERENCE_BEAM_GEOMETRY,
                        REFERENCE_TIP_FORCE, STEEL_BEAM,
                        bernoulli_first_frequency, cantilever_tip_deflection,
                        isotropic_stiffness_voigt, longitudinal_wave_speed,
                        modulus_from_wave_speed)
from .measurements import MeasurementSet, add_measurement_noise
from .mesh import (AssemblyGeometry, MeshResolution, TaggedMesh, export_vtk,
                   generate_assembly_mesh, load_mesh, save_mesh,
                   validate_mesh)
from .sensitivity import (SensitivityBlock, SensitivityRecord,
                          finite_difference_observables,
                          run_transient_with_sensitivities)
from .signalproc import dominant_frequency
from .solvers import (StateVector, TimeGrid, TransientOperator,
                      TransientRecord, run_transient, solve_modal,
                      solve_static)

__version__ = "0.1.0"
