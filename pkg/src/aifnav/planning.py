"""Policy scoring by expected free energy and action selection with MCTS.

One imagined step is scored by six terms: expected information gain on
states (how much the predicted outcome would disambiguate the belief),
expected information gain on parameters (how much the position likelihood
counts would move), an expected collision penalty, and utility terms over
observations, positions and states weighted by the pragmatic weight. The
total follows the convention lower G = better: information gains enter
negatively, collision and (negated) utilities positively.

Planning runs a UCB1 Monte Carlo tree search over listed transitions,
evaluates root actions by their accumulated average G, adds the inductive
goal prior, and picks the argmax of the policy softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import COUNT_FLOOR, GenerativeModel, Preferences, HyperParams, entropy

UCB_C = np.sqrt(2.0)
_EDGE_THRESH = 2.0 * COUNT_FLOOR


@dataclass
class EfeBreakdown:
    state_info_gain: float
    param_info_gain: float
    expected_collision: float
    utility_o: float
    utility_p: float
    utility_s: float

    @property
    def total(self) -> float:
        return (self.expected_collision + self.utility_o + self.utility_p
                + self.utility_s - self.state_info_gain - self.param_info_gain)


def truncate_support(q: np.ndarray, k: int) -> np.ndarray:
    """Keep the k most probable entries and renormalise. Keeps rollout
    beliefs sharp and every downstream product linear in the state count."""
    q = np.asarray(q, dtype=float)
    if k >= q.size:
        return q / q.sum()
    keep = np.argpartition(q, -k)[-k:]
    out = np.zeros_like(q)
    out[keep] = q[keep]
    return out / out.sum()


def predicted_state_belief(model: GenerativeModel, q_s: np.ndarray,
                           action: int, support: int) -> np.ndarray:
    sup = np.nonzero(q_s)[0]
    q_next = q_s[sup] @ model.b_s_outgoing()[action][sup]
    return truncate_support(q_next, support)


def feasible_actions(model: GenerativeModel, state_id: int) -> dict[int, int]:
    """Listed moves out of a state: action -> most likely target."""
    out: dict[int, int] = {}
    rows = model.b_s_outgoing(normalised=False)
    for a in range(model.actions.n_actions):
        if a == model.actions.stay:
            continue
        col = rows[a, state_id]
        best = int(np.argmax(col))
        if col[best] > _EDGE_THRESH and best != state_id:
            out[a] = best
    return out


def state_positions(model: GenerativeModel) -> np.ndarray:
    """(n_states, 2) positions implied by the position likelihood argmax."""
    if model.n_states == 0:
        return np.zeros((0, 2))
    bins = np.argmax(model.a_p, axis=0)
    return np.stack([model.bins.center(b) for b in bins])


def efe_step(model: GenerativeModel, q_s: np.ndarray, action: int,
             prefs: Preferences, collision_prob: float,
             hp: HyperParams) -> tuple[EfeBreakdown, np.ndarray]:
    """Score one imagined action from a state belief.

    Returns the breakdown and the predicted next belief. The state
    information gain is the mutual information between next state and
    predicted outcome (observation and position channels), computed by the
    mixture-entropy identity; the parameter gain is the Dirichlet shift of
    the position likelihood expected under the predicted belief.
    """
    q_next = predicted_state_belief(model, q_s, action, hp.belief_support)
    sup = np.nonzero(q_next)[0]
    w = q_next[sup]

    q_o = w @ model.likelihood_rows("obs")[sup] if model.n_obs else np.zeros(0)
    q_b = w @ model.likelihood_rows("pos")[sup]

    sig = 0.0
    if model.n_obs:
        sig += entropy(q_o) - float(model.column_entropies("obs")[sup] @ w)
    sig += entropy(q_b) - float(model.column_entropies("pos")[sup] @ w)
    pig = float(model.position_novelty()[sup] @ w)

    collision = -collision_prob * prefs.c_c
    pw = prefs.pragmatic_weight
    u_o = -pw * float(q_o @ prefs.c_o) if model.n_obs else 0.0
    u_p = -pw * float(q_b @ prefs.c_p)
    u_s = -pw * float(q_next @ prefs.c_s)
    return EfeBreakdown(sig, pig, collision, u_o, u_p, u_s), q_next


# ---------------------------------------------------------------------------
# inductive goal prior


def inductive_prior(b_s: np.ndarray, c_s0: np.ndarray, depth: int,
                    epsilon: float) -> np.ndarray:
    """Backward-propagated goal preference over the transition counts.

    Preference flows backwards only along listed transitions (counts above
    the edge threshold); the residual floor mass carries no structure and
    would otherwise couple every state to the mean. States from which
    preferred states are reachable within ``depth`` actions receive
    ln(epsilon) times the propagated preference (negative, since epsilon <
    1), so subtracting the result inside the policy softmax boosts goal-ward
    policies. A zero preference vector stays silent, as does a goal beyond
    the horizon.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must lie in (0,1)")
    c_s0 = np.asarray(c_s0, dtype=float)
    if not c_s0.any():
        return np.zeros_like(c_s0)
    totals = np.maximum(b_s.sum(axis=0, keepdims=True), 1e-300)
    p = np.where(b_s > _EDGE_THRESH, b_s / totals, 0.0)
    reach = c_s0.copy()
    v = c_s0.copy()
    for _ in range(depth):
        # best single action backup: max_a E[v(s') | s, a]
        v = np.einsum("psa,p->sa", p, v).max(axis=1)
        reach = np.maximum(reach, v)
    return np.log(epsilon) * reach


def goal_state_preference(model: GenerativeModel, prefs: Preferences) -> np.ndarray:
    """Project observation preferences onto states and add direct state
    preferences; the seed vector for backward propagation."""
    c = prefs.c_s.copy()
    if model.n_obs and prefs.c_o.any():
        c = c + model.a_o_norm().T @ prefs.c_o
    return c


def policy_posterior(g: np.ndarray, gamma: float, h: np.ndarray) -> np.ndarray:
    """Softmax over policies: sigma(-gamma * G - H)."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if g.size == 0:
        raise ValueError("empty policy set")
    if g.shape != h.shape:
        raise ValueError("G and H must have equal length")
    z = -gamma * g - h
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


# ---------------------------------------------------------------------------
# tree search


@dataclass
class PolicyNode:
    belief: np.ndarray                  # truncated state belief
    pose_estimate: np.ndarray
    incoming_action: int | None
    step_g: float = 0.0                 # one-step G of the incoming action
    breakdown: EfeBreakdown | None = None
    parent: "PolicyNode | None" = None
    children: dict[int, "PolicyNode"] = field(default_factory=dict)
    visit_count: int = 0
    g_sum: float = 0.0                  # accumulated downstream G totals

    @property
    def g_value(self) -> float:
        return self.g_sum / self.visit_count if self.visit_count else self.step_g


@dataclass
class RootChildStat:
    action: int
    visits: int
    g_avg: float
    h: float
    prob: float
    breakdown: EfeBreakdown


@dataclass
class PlanResult:
    actions: list[int]
    children: list[RootChildStat]

    @property
    def action(self) -> int:
        return self.actions[0]


def _candidate_actions(model: GenerativeModel, q_s: np.ndarray,
                       blocked: set[int] | None) -> dict[int, float]:
    """action -> collision probability for the argmax state of a belief.
    Moves without a listed edge are treated as colliding; stay is free."""
    s = int(np.argmax(q_s))
    edges = feasible_actions(model, s)
    out = {a: 0.0 for a in edges}
    if blocked:
        for a in blocked:
            if a in out:
                out[a] = 1.0
    out[model.actions.stay] = 0.0
    return out


def _h_bonus(h_vec: np.ndarray, q: np.ndarray) -> float:
    sup = np.nonzero(q)[0]
    return float(h_vec[sup] @ q[sup])


def _expand(model: GenerativeModel, node: PolicyNode, prefs: Preferences,
            hp: HyperParams, positions: np.ndarray, h_vec: np.ndarray,
            blocked: set[int] | None) -> None:
    for a, cprob in sorted(_candidate_actions(model, node.belief, blocked).items()):
        bd, q_next = efe_step(model, node.belief, a, prefs, cprob, hp)
        pose = positions[np.nonzero(q_next)[0]].T @ q_next[np.nonzero(q_next)[0]] \
            if positions.size else node.pose_estimate
        node.children[a] = PolicyNode(
            belief=q_next, pose_estimate=np.asarray(pose), incoming_action=a,
            step_g=bd.total + _h_bonus(h_vec, q_next), breakdown=bd, parent=node)


def _ucb_pick(node: PolicyNode, rng: np.random.Generator) -> PolicyNode:
    children = list(node.children.values())
    unvisited = [c for c in children if c.visit_count == 0]
    if unvisited:
        return unvisited[0]
    g = np.array([c.g_value for c in children])
    lo, hi = g.min(), g.max()
    rewards = (hi - g) / (hi - lo) if hi > lo else np.full(len(g), 0.5)
    visits = np.array([c.visit_count for c in children])
    ucb = rewards + UCB_C * np.sqrt(np.log(node.visit_count + 1) / visits)
    best = np.flatnonzero(ucb >= ucb.max() - 1e-12)
    pick = best[0] if best.size == 1 else rng.choice(best)
    return children[int(pick)]


def _rollout(model: GenerativeModel, node: PolicyNode, prefs: Preferences,
             hp: HyperParams, h_vec: np.ndarray, depth_left: int) -> float:
    """Greedy descent: at every step score all candidate actions one step
    ahead and keep the best measured G (including the inductive shaping, so
    rollouts are goal-aware beyond the raw one-step utilities)."""
    q = node.belief
    total = 0.0
    for _ in range(depth_left):
        best_g, best_q = None, None
        for a, cprob in sorted(_candidate_actions(model, q, None).items()):
            bd, q_next = efe_step(model, q, a, prefs, cprob, hp)
            g = bd.total + _h_bonus(h_vec, q_next)
            if best_g is None or g < best_g:
                best_g, best_q = g, q_next
        if best_g is None:
            break
        total += best_g
        q = best_q
    return total


def _depth(node: PolicyNode) -> int:
    d = 0
    while node.parent is not None:
        d += 1
        node = node.parent
    return d


def mcts_plan(model: GenerativeModel, belief_q_s: np.ndarray,
              prefs: Preferences, hp: HyperParams,
              rng: np.random.Generator,
              blocked_root_actions: set[int] | None = None) -> PlanResult:
    """Select ``hp.policy_length`` actions by UCB1 tree search.

    Each simulation selects a leaf by UCB1, expands one child per candidate
    action with its predicted belief, pose and one-step G, rolls out greedily
    to the search depth, and backpropagates the accumulated G. The final
    choice is the argmax of the policy softmax over root children, combining
    their accumulated average G with the inductive goal prior. With no
    feasible move the stay action is returned.
    """
    if model.n_states == 0 or belief_q_s.size != model.n_states:
        raise ValueError("belief does not match the model")
    positions = state_positions(model)
    # the inductive prior acts as a state preference, so it carries the
    # pragmatic weight like the other utility terms
    h_vec = prefs.pragmatic_weight * inductive_prior(
        model.b_s, goal_state_preference(model, prefs),
        hp.inductive_depth, hp.epsilon_inductive)

    q_root = truncate_support(np.asarray(belief_q_s, dtype=float), hp.belief_support)
    root_pose = positions[np.argmax(q_root)] if positions.size else np.zeros(2)
    root = PolicyNode(belief=q_root, pose_estimate=root_pose, incoming_action=None)

    selected: list[int] = []
    for _ in range(hp.policy_length):
        for _sim in range(hp.mcts_simulations):
            node = root
            while node.children:
                node = _ucb_pick(node, rng)
            if node.visit_count > 0 or node is root:
                _expand(model, node, prefs, hp, positions, h_vec,
                        blocked_root_actions if node is root else None)
                if node.children:
                    node = _ucb_pick(node, rng)
            value = _rollout(model, node, prefs, hp, h_vec,
                             max(hp.mcts_depth - _depth(node), 0))
            while node.parent is not None:
                value += node.step_g
                node.visit_count += 1
                node.g_sum += value
                node = node.parent
            root.visit_count += 1

        if not root.children:
            selected.append(model.actions.stay)
            break
        pairs = sorted(root.children.items())
        g_avg = np.array([c.g_value for _, c in pairs])
        h = np.array([
            float(h_vec[np.nonzero(c.belief)[0]] @ c.belief[np.nonzero(c.belief)[0]])
            for _, c in pairs])
        probs = policy_posterior(g_avg, hp.gamma, h)
        best = int(np.argmax(probs))
        selected.append(pairs[best][0])
        if len(selected) == hp.policy_length:
            stats = [RootChildStat(a, c.visit_count, c.g_value, float(h[i]),
                                   float(probs[i]), c.breakdown)
                     for i, (a, c) in enumerate(pairs)]
            return PlanResult(selected, stats)
        root = pairs[best][1]  # re-root for the next action of the policy
        root.parent = None

    if not selected:
        selected = [model.actions.stay]
    return PlanResult(selected, [])
