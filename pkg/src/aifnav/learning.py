"""Dirichlet pseudo-count updates for transitions and observation likelihoods.

Transition learning is multiplicative: counts change in proportion to their
current value, the posterior beliefs over the two endpoint states, and a
situation-dependent learning rate. The count floor keeps negative rates from
killing an entry outright and is the minimum plasticity with which a
transition can later be revived.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import COUNT_CAP, COUNT_FLOOR, GenerativeModel


class Direction(Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


class OutcomeKind(Enum):
    POSSIBLE = "possible"
    IMPOSSIBLE = "impossible"
    PREDICTED_POSSIBLE = "predicted_possible"
    PREDICTED_IMPOSSIBLE = "predicted_impossible"


@dataclass(frozen=True)
class TransitionOutcome:
    direction: Direction
    kind: OutcomeKind


_LAMBDA_TABLE = {
    (Direction.FORWARD, OutcomeKind.POSSIBLE): 7.0,
    (Direction.FORWARD, OutcomeKind.IMPOSSIBLE): -7.0,
    (Direction.FORWARD, OutcomeKind.PREDICTED_POSSIBLE): 5.0,
    (Direction.FORWARD, OutcomeKind.PREDICTED_IMPOSSIBLE): -5.0,
    (Direction.REVERSE, OutcomeKind.POSSIBLE): 5.0,
    (Direction.REVERSE, OutcomeKind.IMPOSSIBLE): -5.0,
    (Direction.REVERSE, OutcomeKind.PREDICTED_POSSIBLE): 3.0,
    (Direction.REVERSE, OutcomeKind.PREDICTED_IMPOSSIBLE): -3.0,
}


def lambda_for(outcome: TransitionOutcome) -> float:
    """Learning rate for a transition outcome."""
    return _LAMBDA_TABLE[(outcome.direction, outcome.kind)]


def update_transition(b: np.ndarray, q_s_next: np.ndarray, q_s_prev: np.ndarray,
                      action: int, lam: float) -> np.ndarray:
    """Apply one directed pseudo-count update to the (s', s) slice of an
    action: b += outer(q_next, q_prev) * b * lam, clamped to the floor.
    Mutates and returns the count tensor."""
    q_s_next = np.asarray(q_s_next, dtype=float)
    q_s_prev = np.asarray(q_s_prev, dtype=float)
    if b.shape[0] != q_s_next.size or b.shape[1] != q_s_prev.size:
        raise ValueError("belief dimensions do not match the count tensor")
    slab = b[:, :, action]
    slab += np.outer(q_s_next, q_s_prev) * slab * lam
    np.clip(slab, COUNT_FLOOR, COUNT_CAP, out=slab)
    return b


def apply_transition_outcome(model: GenerativeModel, q_s_prev: np.ndarray,
                             q_s_next: np.ndarray, action: int,
                             kind: OutcomeKind) -> None:
    """Forward update on the executed action plus the reverse update on the
    opposite action at the matching reverse rate."""
    fwd = lambda_for(TransitionOutcome(Direction.FORWARD, kind))
    rev = lambda_for(TransitionOutcome(Direction.REVERSE, kind))
    update_transition(model.b_s, q_s_next, q_s_prev, action, fwd)
    update_transition(model.b_s, q_s_prev, q_s_next,
                      model.actions.opposite(action), rev)
    model._touch()


def reinforce_observation(a_o: np.ndarray, state_id: int, observation_id: int,
                          rate: float = 1.0) -> np.ndarray:
    """Add evidence linking an observation to a state. Mutates and returns
    the count matrix; the column renormalises on read."""
    if not (0 <= observation_id < a_o.shape[0] and 0 <= state_id < a_o.shape[1]):
        raise IndexError("observation or state id out of range")
    a_o[observation_id, state_id] += rate
    return a_o
