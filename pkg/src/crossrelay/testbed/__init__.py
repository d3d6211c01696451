"""Deterministic testbed: virtual clock, simulated network with an
active adversary, and mock parachains with a hub contract."""

from crossrelay.testbed.clock import DeadlockError, Simulation
from crossrelay.testbed.network import (
    AdversaryAction,
    CapturedFrame,
    Inject,
    LinkSpec,
    MitmSwap,
    Replay,
    SimNetwork,
    Tamper,
)
from crossrelay.testbed.parachain import Contract, ContractError, CrossChainEvent, MockParachain

__all__ = [
    "AdversaryAction",
    "CapturedFrame",
    "Contract",
    "ContractError",
    "CrossChainEvent",
    "DeadlockError",
    "Inject",
    "LinkSpec",
    "MitmSwap",
    "MockParachain",
    "Replay",
    "SimNetwork",
    "Simulation",
    "Tamper",
]
