"""Discrete-event simulation of the storage network and attack experiments."""

from .config import AdversarySpec, ClientSpec, MinerSpec, ProtocolParams, ScenarioConfig
from .engine import RunResult, Simulator, run_scenario
from .metrics import COLUMNS, EpochRow, MetricsReport

__all__ = ["AdversarySpec", "ClientSpec", "MinerSpec", "ProtocolParams", "ScenarioConfig", "RunResult",
           "Simulator", "run_scenario", "COLUMNS", "EpochRow", "MetricsReport"]
