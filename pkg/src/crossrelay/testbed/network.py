"""Simulated point-to-point network with an active adversary.

Endpoints register a handler under a string address. Frames travel over
configured links with per-link latency, loss, and duplication; with no
adversary and zero loss, per-link delivery is FIFO. Every frame that
reaches a handler lands in the capture log first, which is what the
confidentiality and accountability tests scan.

Adversary hooks intercept frames per directed link and may drop,
modify, or multiply them; independent injection and replay of captured
frames is also supported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random
from typing import Callable, Optional, Union

from crossrelay.testbed.clock import Simulation

Handler = Callable[[bytes, int], None]
Interceptor = Callable[[bytes, int], Optional[list[bytes]]]


class NetworkError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinkSpec:
    """Latency is either a constant or a (low, high) uniform range, ms."""

    latency_ms: Union[int, tuple[int, int]] = 0
    loss: float = 0.0
    duplication: float = 0.0


@dataclass(frozen=True)
class CapturedFrame:
    time_ms: int
    src: str
    dst: str
    frame: bytes
    adversarial: bool = False


# -- adversary actions (see SimNetwork.adversary_apply) -------------------------


@dataclass(frozen=True)
class Replay:
    """Re-deliver a previously captured frame on the link."""

    frame: bytes


@dataclass(frozen=True)
class Tamper:
    """Mutate matching frames in flight; ``mutate`` returns the replacement."""

    mutate: Callable[[bytes], bytes]
    once: bool = True


@dataclass(frozen=True)
class Inject:
    """Deliver an adversary-crafted frame as if sent on the link."""

    frame: bytes


@dataclass(frozen=True)
class MitmSwap:
    """Substitute frames in flight (classic man-in-the-middle position);
    ``swap`` returns the replacement frame or None to pass through."""

    swap: Callable[[bytes], Optional[bytes]]


AdversaryAction = Union[Replay, Tamper, Inject, MitmSwap]


@dataclass
class _Link:
    spec: LinkSpec
    next_free_ms: int = 0
    interceptors: list[Interceptor] = field(default_factory=list)


class SimNetwork:
    def __init__(self, sim: Simulation, rng: Random) -> None:
        self._sim = sim
        self._rng = rng
        self._handlers: dict[str, Handler] = {}
        self._links: dict[tuple[str, str], _Link] = {}
        self.capture: list[CapturedFrame] = []

    def register(self, address: str, handler: Handler) -> None:
        if address in self._handlers:
            raise NetworkError(f"address {address!r} already registered")
        self._handlers[address] = handler

    def add_link(self, a: str, b: str, spec: LinkSpec = LinkSpec()) -> None:
        self._links[(a, b)] = _Link(spec)
        self._links[(b, a)] = _Link(spec)

    def _link(self, src: str, dst: str) -> _Link:
        link = self._links.get((src, dst))
        if link is None:
            raise NetworkError(f"no link {src!r} -> {dst!r}")
        return link

    def intercept(self, src: str, dst: str, interceptor: Interceptor) -> None:
        """Install an adversary hook on a directed link. The interceptor
        returns the list of frames to deliver instead (empty drops the
        frame) or None to pass the original through untouched."""
        self._link(src, dst).interceptors.append(interceptor)

    def send(self, src: str, dst: str, frame: bytes) -> None:
        link = self._link(src, dst)
        frames: list[tuple[bytes, bool]] = [(frame, False)]
        for interceptor in link.interceptors:
            replaced = interceptor(frame, self._sim.now)
            if replaced is not None:
                frames = [(f, True) for f in replaced]
                break
        for out_frame, adversarial in frames:
            if not adversarial and link.spec.loss > 0 and self._rng.random() < link.spec.loss:
                continue
            copies = 1
            if not adversarial and link.spec.duplication > 0 and self._rng.random() < link.spec.duplication:
                copies = 2
            for _ in range(copies):
                self._deliver(link, src, dst, out_frame, adversarial)

    def inject(self, src: str, dst: str, frame: bytes) -> None:
        """Adversarial frame entering the link's delivery queue."""
        link = self._link(src, dst)
        self._deliver(link, src, dst, frame, adversarial=True)

    def adversary_apply(self, src: str, dst: str, action: AdversaryAction) -> None:
        """Schedule one adversarial action on a directed link."""
        if isinstance(action, (Replay, Inject)):
            self.inject(src, dst, action.frame)
        elif isinstance(action, Tamper):
            fired = [False]

            def tamper(frame: bytes, _now: int) -> Optional[list[bytes]]:
                if action.once and fired[0]:
                    return None
                fired[0] = True
                return [action.mutate(frame)]

            self.intercept(src, dst, tamper)
        elif isinstance(action, MitmSwap):

            def swap(frame: bytes, _now: int) -> Optional[list[bytes]]:
                replacement = action.swap(frame)
                return None if replacement is None else [replacement]

            self.intercept(src, dst, swap)
        else:
            raise NetworkError(f"unknown adversary action {action!r}")

    def _latency(self, spec: LinkSpec) -> int:
        if isinstance(spec.latency_ms, tuple):
            low, high = spec.latency_ms
            return self._rng.randint(low, high)
        return spec.latency_ms

    def _deliver(self, link: _Link, src: str, dst: str, frame: bytes, adversarial: bool) -> None:
        handler = self._handlers.get(dst)
        if handler is None:
            raise NetworkError(f"no endpoint registered at {dst!r}")
        arrival = self._sim.now + self._latency(link.spec)
        # never deliver ahead of an earlier frame on the same link: FIFO
        arrival = max(arrival, link.next_free_ms)
        link.next_free_ms = arrival

        def deliver() -> None:
            self.capture.append(CapturedFrame(self._sim.now, src, dst, frame, adversarial))
            handler(frame, self._sim.now)

        self._sim.call_at(arrival, deliver)
