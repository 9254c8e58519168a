"""Deterministic simulator of phones, gateways and radio propagation."""

from .engine import (
    GroundTruthLog,
    PhoneSpec,
    Region,
    Scenario,
    ScenarioError,
    SimulationResult,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    simulate,
)
from .models import (
    ALL_MODES,
    PROBE_INTERVALS,
    SPEEDS,
    ChannelModel,
    GeometryError,
    MobilityPlan,
    Mode,
    PhoneModel,
)
