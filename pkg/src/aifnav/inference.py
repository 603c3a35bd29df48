"""Posterior state/position beliefs, fit quality, and localisation outcomes.

On discrete categoricals the exact single-step posterior is tractable, so the
variational optimisation collapses: the KL between the approximate and the
true posterior is zero by construction and the reported free energy is the
negative log evidence of the step.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import GenerativeModel, is_categorical


@dataclass
class BeliefState:
    """Posterior over states and position bins plus the free energy of the
    current fit. ``confident`` tracks the z-score lost test."""

    q_s: np.ndarray
    q_p: np.ndarray
    vfe: float = 0.0
    confident: bool = True

    def copy(self) -> "BeliefState":
        return BeliefState(self.q_s.copy(), self.q_p.copy(), self.vfe, self.confident)

    def validate(self) -> "BeliefState":
        if not (is_categorical(self.q_s) and is_categorical(self.q_p)):
            raise ValueError("belief vectors must be categoricals")
        return self


class ObsMatchKind(Enum):
    KNOWN_AT_EXPECTED = "known_at_expected"
    KNOWN_ELSEWHERE = "known_elsewhere"
    NO_MATCH = "no_match"


class LocalisationOutcome(Enum):
    TRUST_PREDICTION = "trust_prediction"
    TRUST_PERCEPTION = "trust_perception"
    LOST = "lost"
    NOVEL_OBSERVATION_AT_KNOWN_STATE = "novel_observation_at_known_state"


def predict_beliefs(model: GenerativeModel, prev: BeliefState,
                    action: int) -> tuple[np.ndarray, np.ndarray]:
    """Push beliefs through the transition models for one action."""
    if not (0 <= action < model.actions.n_actions):
        raise IndexError(f"action {action} out of range")
    q_s = model.b_s_norm()[:, :, action] @ prev.q_s
    q_p = model.predict_position(prev.q_p, action)
    return q_s / q_s.sum(), q_p / q_p.sum()


def posterior_update(model: GenerativeModel,
                     priors: tuple[np.ndarray, np.ndarray],
                     obs_likelihood_row: np.ndarray,
                     pos_evidence: np.ndarray,
                     lost_zscore_threshold: float = 4.0) -> BeliefState:
    """Exact Bayes over the state and position factors.

    ``obs_likelihood_row`` is the per-state likelihood of the current
    observation evidence; ``pos_evidence`` is a non-negative vector over
    position bins (odometry bump). The state factor also absorbs the position
    evidence through the position likelihood a_p. All-zero joint evidence
    falls back to the priors with confident=False.
    """
    q_s_prior, q_p_prior = priors
    obs_likelihood_row = np.asarray(obs_likelihood_row, dtype=float)
    pos_evidence = np.asarray(pos_evidence, dtype=float)
    if obs_likelihood_row.shape != q_s_prior.shape:
        raise ValueError("obs likelihood row has wrong dimension")
    if pos_evidence.shape != q_p_prior.shape:
        raise ValueError("position evidence has wrong dimension")
    if (obs_likelihood_row < 0).any() or (pos_evidence < 0).any():
        raise ValueError("evidence must be non-negative")

    pos_lik_s = pos_evidence @ model.a_p_norm()  # P(evidence | s) through a_p
    joint_s = q_s_prior * obs_likelihood_row * pos_lik_s
    joint_p = q_p_prior * pos_evidence
    mass_s = joint_s.sum()
    mass_p = joint_p.sum()
    if mass_s <= 0.0 or mass_p <= 0.0:
        return BeliefState(q_s_prior.copy(), q_p_prior.copy(),
                           vfe=float("inf"), confident=False)
    q_s = joint_s / mass_s
    q_p = joint_p / mass_p
    vfe = -float(np.log(mass_s) + np.log(mass_p))
    confident = zscore_confidence(q_s) >= lost_zscore_threshold
    return BeliefState(q_s, q_p, vfe=vfe, confident=confident)


def zscore_confidence(q: np.ndarray) -> float:
    """How strongly the most likely entry stands out: (max - mean) / std of
    the probability vector. A uniform vector scores 0."""
    q = np.asarray(q, dtype=float)
    if q.size < 2:
        return 0.0
    std = float(q.std())
    if std == 0.0:
        return 0.0
    return float((q.max() - q.mean()) / std)


def resolve_localisation(motion_confident: bool, obs_match: ObsMatchKind,
                         position_confident: bool) -> LocalisationOutcome:
    """Four-way outcome of a localisation step.

    A match at the expected place confirms the prediction. A match elsewhere
    overrides a shaky motion estimate but not a confident one. No match means
    either a novel view of a place we are sure about, or being lost.
    """
    if obs_match is ObsMatchKind.KNOWN_AT_EXPECTED:
        return LocalisationOutcome.TRUST_PREDICTION
    if obs_match is ObsMatchKind.KNOWN_ELSEWHERE:
        if motion_confident:
            return LocalisationOutcome.TRUST_PREDICTION
        return LocalisationOutcome.TRUST_PERCEPTION
    if position_confident:
        return LocalisationOutcome.NOVEL_OBSERVATION_AT_KNOWN_STATE
    return LocalisationOutcome.LOST


def position_evidence_bump(model: GenerativeModel, position: np.ndarray,
                           sigma: float) -> np.ndarray:
    """Gaussian evidence over bins centred on an (x, y) estimate."""
    centers = model.bins.centers()
    d2 = ((centers - np.asarray(position)[None, :]) ** 2).sum(axis=1)
    e = np.exp(-0.5 * d2 / max(sigma, 1e-6) ** 2)
    total = e.sum()
    if total <= 0:
        return np.full(model.n_bins, 1.0 / model.n_bins)
    return e / total
