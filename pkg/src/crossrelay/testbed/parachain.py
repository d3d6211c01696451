"""Mock parachains: key-value contracts plus a hub for cross-chain events.

A parachain produces blocks on a fixed interval. Events emitted through
the hub become visible to block listeners (the chain's router) only when
the next block confirms them, and local executions are considered
confirmed at the next block append.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from crossrelay.router import CrossChainEvent, event_signing_bytes
from crossrelay.crypto.signing import verify_sig
from crossrelay.testbed.clock import Simulation


class ContractError(RuntimeError):
    pass


class HubError(RuntimeError):
    """Event rejected at the hub (bad originator signature)."""


ContractFn = Callable[["Contract", tuple[bytes, ...]], bytes]


@dataclass
class Contract:
    """Three-verb contract: read(key), write(key, value), invoke(name, args)."""

    contract_id: str
    state: dict[str, bytes] = field(default_factory=dict)
    functions: dict[str, ContractFn] = field(default_factory=dict)

    def call(self, function: str, args: tuple[bytes, ...]) -> bytes:
        if function == "read":
            if not args:
                raise ContractError("read needs a key argument")
            key = args[0].decode("utf-8", errors="replace")
            if key not in self.state:
                raise ContractError(f"no value stored under {key!r}")
            return self.state[key]
        if function == "write":
            if len(args) < 2:
                raise ContractError("write needs key and value arguments")
            self.state[args[0].decode("utf-8", errors="replace")] = args[1]
            return b""
        fn = self.functions.get(function)
        if fn is None:
            raise ContractError(f"contract {self.contract_id!r} has no function {function!r}")
        return fn(self, args)


@dataclass(frozen=True)
class EmissionReceipt:
    chain_id: int
    emitted_at_ms: int
    confirm_height: int


@dataclass(frozen=True)
class ParachainBlock:
    height: int
    timestamp: int
    events: tuple[CrossChainEvent, ...]


BlockListener = Callable[[int, list[CrossChainEvent]], None]


class MockParachain:
    def __init__(self, chain_id: int, sim: Simulation, block_interval_ms: int = 100) -> None:
        self.chain_id = chain_id
        self.block_interval_ms = block_interval_ms
        self._sim = sim
        self.height = 0
        self.blocks: list[ParachainBlock] = []
        self.contracts: dict[str, Contract] = {}
        self.event_log: list[tuple[int, CrossChainEvent]] = []
        self._pending_events: list[CrossChainEvent] = []
        self._block_listeners: list[BlockListener] = []
        self._confirm_once: list[Callable[[], None]] = []
        self._started = False

    def add_contract(self, contract: Contract) -> None:
        self.contracts[contract.contract_id] = contract

    def contract(self, contract_id: str) -> Contract:
        contract = self.contracts.get(contract_id)
        if contract is None:
            raise ContractError(f"chain {self.chain_id} has no contract {contract_id!r}")
        return contract

    def execute(self, contract_id: str, function: str, args: tuple[bytes, ...]) -> bytes:
        return self.contract(contract_id).call(function, args)

    def subscribe(self, listener: BlockListener) -> None:
        self._block_listeners.append(listener)

    def on_next_block(self, fn: Callable[[], None]) -> None:
        """One-shot confirmation callback, fired at the next block append."""
        self._confirm_once.append(fn)

    def hub_emit(self, event: CrossChainEvent) -> EmissionReceipt:
        """Publish a cross-chain event; visible after the next block."""
        if not verify_sig(
            event.originator_public_key, event_signing_bytes(event), event.originator_signature
        ):
            raise HubError("originator signature on the event does not verify")
        self._pending_events.append(event)
        return EmissionReceipt(self.chain_id, self._sim.now, self.height + 1)

    def start(self) -> None:
        if not self._started:
            self._started = True
            self._sim.call_in(self.block_interval_ms, self._tick)

    def _tick(self) -> None:
        self.height += 1
        events = self._pending_events
        self._pending_events = []
        self.blocks.append(ParachainBlock(self.height, self._sim.now, tuple(events)))
        for event in events:
            self.event_log.append((self.height, event))
        confirmations = self._confirm_once
        self._confirm_once = []
        for fn in confirmations:
            fn()
        for listener in self._block_listeners:
            listener(self.height, list(events))
        self._sim.call_in(self.block_interval_ms, self._tick)
