"""Sweep -> Hold -> Run interface state machine."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class State(enum.Enum):
    SWEEP = "Sweep"
    HOLD = "Hold"
    RUN = "Run"


class Event(enum.Enum):
    SWEEP_DONE = "sweep_done"
    USER_GO = "user_go"
    AUTO_GO = "auto_go"


class IllegalTransition(RuntimeError):
    def __init__(self, state, event):
        super().__init__(f"illegal transition: ({state.value}, {event.value})")
        self.state = state
        self.event = event


@dataclass(frozen=True)
class InterfaceState:
    """Current state; ``sweep_complete`` records that the calibration sweep finished."""

    state: State = State.SWEEP
    sweep_complete: bool = False
    entered_at: dict = field(default_factory=lambda: {State.SWEEP: 0.0})


GO_EVENTS = (Event.USER_GO, Event.AUTO_GO)


def state_machine_step(current: InterfaceState, event: Event, now: float = 0.0) -> InterfaceState:
    """Apply one event.

    Only two edges change state: Sweep -> Hold on a go command once the sweep
    has finished, and Hold -> Run on a go command.  ``sweep_done`` is
    accepted only while sweeping and just marks the sweep as finished.
    """
    event = Event(event)
    st = current.state
    if st is State.SWEEP and event is Event.SWEEP_DONE and not current.sweep_complete:
        return InterfaceState(st, True, dict(current.entered_at))
    if st is State.SWEEP and event in GO_EVENTS and current.sweep_complete:
        return InterfaceState(State.HOLD, True, {**current.entered_at, State.HOLD: now})
    if st is State.HOLD and event in GO_EVENTS:
        return InterfaceState(State.RUN, True, {**current.entered_at, State.RUN: now})
    raise IllegalTransition(st, event)


def legal_transitions() -> list[tuple[State, State]]:
    """State-changing edges found by trying every (state, event) pair."""
    edges = set()
    for st in State:
        for complete in (False, True):
            if st is not State.SWEEP and not complete:
                continue
            for ev in Event:
                try:
                    nxt = state_machine_step(InterfaceState(st, complete), ev)
                except IllegalTransition:
                    continue
                if nxt.state is not st:
                    edges.add((st, nxt.state))
    return sorted(edges, key=lambda e: (e[0].value, e[1].value))
