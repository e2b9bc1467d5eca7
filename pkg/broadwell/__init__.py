# flake8: noqa: F401
# noreorder
"""
Broadwell lab: numerical experiments on the planar Broadwell model.
"""
__title__ = "broadwell"
__license__ = "The Unlicense (Unlicense)"

from broadwell.version import __version__
from broadwell.model import VelocityModel, broadwell2d, load_model, validate_conservation
from broadwell.fields import Boundary, Domain, Field, FrameTransform
from broadwell.functionals import FunctionalSeries, MonitorSet, Theorem1Params, Theorem2Params
from broadwell.solver_physical import PhysicalStepConfig, PicardConfig, run_physical, step_physical
from broadwell.solver_rescaled import RescaledStepConfig, run_rescaled, step_rescaled
from broadwell.blowup import detect_blowup, estimate_tstar
from broadwell.scenario import Fig3Layout, PacketSpec, ScenarioConfig, scenario_fig3
