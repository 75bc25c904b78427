"""Harmonic maps from Riemann surfaces into Hermitian surfaces."""
from .errors import *  # noqa: F401,F403
from .targets import (FlatC2, FSProduct, HopfSurface, HermitianTarget, make_target,
                      chern_connection, torsion, torsion_jet, curvature, transition)
from .domains import DomainChart
from .pullback import MapState, pullback, energy, harmonic_residual, max_residual
from .flow import FlowConfig, flow_to_harmonic, concentrating_family
from .bubbles import BubbleConfig, build_tree, energy_identity_check

__version__ = "0.1.0"
