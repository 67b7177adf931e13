"""Toric and toroidal degenerations: exact fan combinatorics and the model
metric asymptotics (bounded Monge-Ampere defect, Kodaira-Spencer field,
Weil-Petersson decay)."""

from .degeneration import (
    DegenerationSpec,
    SpecError,
    ToroidalAtlas,
    divisor_multiplicity,
    is_simple,
    lambda_constants,
    minimal_base_extension,
    monomial_family,
    scale_weights,
    strata,
    toroidal_min_extension,
    validate_atlas,
)
from .fan_pl import Cone, Fan, FanError, PLWeight, build_fan, convexify, faces, is_simplicial, locate
from .lattice import primitivize, smith_normal_form, sublattice_index

__version__ = "0.1.0"
