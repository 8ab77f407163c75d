"""Single-threaded discrete-event queue ordering message deliveries."""

from __future__ import annotations

import heapq
from typing import Callable, Iterator, List, Optional, Tuple

from qtransmit.core.config import get_settings
from qtransmit.core.errors import CausalityError
from qtransmit.core.logs import get_logger
from qtransmit.models.protocol import Message
from qtransmit.services.spacetime import causal_reachable

LOG = get_logger("simulation")


class EventQueue:
    """Deliveries ordered by (time, sequence number).

    Causality is checked when a message is posted; a rejected message is kept
    in `rejected` with its violation flag set so the run can record it.
    """

    def __init__(self, tau_geo: Optional[float] = None):
        self.tau_geo = get_settings().tau_geo if tau_geo is None else tau_geo
        self._heap: List[Tuple[float, int, Message]] = []
        self._seq = 0
        self.now = float("-inf")
        self.delivered: List[Message] = []
        self.rejected: List[Message] = []

    def __len__(self) -> int:
        return len(self._heap)

    def post(self, msg: Message) -> Message:
        msg.seq = self._seq
        self._seq += 1
        if not causal_reachable(msg.emit, msg.deliver, msg.speed_limit, self.tau_geo):
            msg.violation = True
            self.rejected.append(msg)
            raise CausalityError(
                f"message {msg.seq} ({msg.purpose}, round {msg.round}, branch {msg.branch}) "
                f"emitted at t={msg.emit.t:.6g} x={msg.emit.x} cannot reach "
                f"t={msg.deliver.t:.6g} x={msg.deliver.x} at speed {msg.speed_limit}"
            )
        heapq.heappush(self._heap, (msg.deliver.t, msg.seq, msg))
        return msg

    def pop(self) -> Message:
        t, _, msg = heapq.heappop(self._heap)
        self.now = t
        self.delivered.append(msg)
        return msg

    def drain(self) -> Iterator[Message]:
        """Yield deliveries in time order; handlers may post more while draining."""
        while self._heap:
            yield self.pop()

    def run(self, handler: Callable[[Message], None]) -> int:
        count = 0
        for msg in self.drain():
            handler(msg)
            count += 1
        LOG.debug("[simulation] delivered %d messages", count)
        return count

    def pending(self) -> List[Message]:
        """Posted but undelivered messages, in delivery order."""
        return [m for _, _, m in sorted(self._heap)]
