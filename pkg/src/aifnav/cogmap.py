"""Topological map: states with positions, stored observations, connectivity.

Nodes are proposed from free-space geometry (one candidate ring per step,
plus anticipatory chains along clear headings) and admitted through a free
energy gate: a candidate becomes a state only when explaining its position
bin with a dedicated state lowers free energy despite the complexity cost of
one more state. Edges are not stored separately; they are a materialised view
over the transition counts, so graph and model cannot diverge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import COUNT_FLOOR, GenerativeModel, HyperParams

# Transition counts above this multiple of the floor are listed as edges.
EDGE_LIST_FACTOR = 2.0


@dataclass
class TopoNode:
    state_id: int
    position: np.ndarray
    observation_ids: list[int] = field(default_factory=list)

    @property
    def visited(self) -> bool:
        return len(self.observation_ids) > 0


@dataclass
class Candidate:
    """A proposed node position reachable under `action` from its source."""
    position: np.ndarray
    action: int
    source_state: int | None = None


class TopoMap:
    """Node table plus derived per-action adjacency."""

    def __init__(self):
        self.nodes: list[TopoNode] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def add_node(self, state_id: int, position) -> TopoNode:
        if state_id != len(self.nodes):
            raise ValueError("state ids must be appended densely")
        node = TopoNode(state_id, np.asarray(position, dtype=float))
        self.nodes.append(node)
        return node

    def positions(self) -> np.ndarray:
        if not self.nodes:
            return np.zeros((0, 2))
        return np.stack([n.position for n in self.nodes])

    def nearest_node(self, position, within: float | None = None,
                     visited_only: bool = False) -> TopoNode | None:
        best, best_d = None, np.inf
        for node in self.nodes:
            if visited_only and not node.visited:
                continue
            d = float(np.linalg.norm(node.position - position))
            if d < best_d:
                best, best_d = node, d
        if best is None or (within is not None and best_d > within):
            return None
        return best

    def any_within(self, position, radius: float) -> bool:
        pos = self.positions()
        if pos.shape[0] == 0:
            return False
        return bool((np.linalg.norm(pos - np.asarray(position)[None, :], axis=1)
                     < radius - 1e-9).any())

    def edges(self, model: GenerativeModel,
              include_stay: bool = False) -> list[tuple[int, int, int, float]]:
        """Listed edges (s, a, s', probability): transition counts above the
        listing threshold, self-loops and stay omitted unless asked."""
        out = []
        b_norm = model.b_s_norm()
        thresh = EDGE_LIST_FACTOR * COUNT_FLOOR
        for a in range(model.actions.n_actions):
            if a == model.actions.stay and not include_stay:
                continue
            src, dst = np.nonzero(model.b_s[:, :, a].T > thresh)
            for s, s2 in zip(src, dst):
                if s2 == s and not include_stay:
                    continue
                out.append((int(s), int(a), int(s2), float(b_norm[s2, s, a])))
        return out

    def neighbors(self, model: GenerativeModel, state_id: int) -> dict[int, int]:
        """action -> most likely listed target from a state."""
        thresh = EDGE_LIST_FACTOR * COUNT_FLOOR
        out: dict[int, int] = {}
        for a in range(model.actions.n_actions):
            if a == model.actions.stay:
                continue
            col = model.b_s[:, state_id, a]
            best = int(np.argmax(col))
            if col[best] > thresh and best != state_id:
                out[a] = best
        return out

    def check_spacing_invariant(self, influence_radius: float) -> None:
        """No two visited nodes may lie within the influence radius."""
        visited = [n for n in self.nodes if n.visited]
        for i, a in enumerate(visited):
            for b in visited[i + 1:]:
                d = float(np.linalg.norm(a.position - b.position))
                if d < influence_radius - 1e-9:
                    raise AssertionError(
                        f"visited nodes {a.state_id} and {b.state_id} are {d:.3f} m apart")


# ---------------------------------------------------------------------------
# geometric node proposal


def _heading_clear_distance(free_range: float, max_range: float,
                            buffer: float) -> float:
    """Usable travel along a heading. A capped reading means open space at
    least to the cap; a real hit subtracts the collision buffer."""
    if free_range >= max_range - 1e-9:
        return free_range
    return free_range - buffer


def propose_nodes(pose: tuple[float, float, float], free_ranges: np.ndarray,
                  hp: HyperParams, topo: TopoMap,
                  max_range: float | None = None) -> list[Candidate]:
    """One candidate per clear heading at the influence radius, pushed to
    twice the radius when an existing node sits within the radius of the
    spot, dropped if both conflict."""
    max_range = hp.lidar_range if max_range is None else max_range
    n_headings = hp.n_actions - 1
    free_ranges = np.asarray(free_ranges, dtype=float)
    if free_ranges.size != n_headings:
        raise ValueError(f"need {n_headings} heading ranges, got {free_ranges.size}")
    buffer = hp.agent_radius + hp.obstacle_padding
    origin = np.asarray(pose[:2], dtype=float)
    out: list[Candidate] = []
    placed: list[np.ndarray] = []

    def conflicts(point: np.ndarray) -> bool:
        if topo.any_within(point, hp.influence_radius):
            return True
        return any(np.linalg.norm(point - q) < hp.influence_radius - 1e-9
                   for q in placed)

    for a in range(n_headings):
        clear = _heading_clear_distance(free_ranges[a], max_range, buffer)
        if clear <= buffer:
            continue
        heading = 2.0 * np.pi * a / n_headings
        direction = np.array([np.cos(heading), np.sin(heading)])
        for dist in (hp.influence_radius, 2.0 * hp.influence_radius):
            if dist > clear:
                break
            point = origin + dist * direction
            if not conflicts(point):
                out.append(Candidate(point, a))
                placed.append(point)
                break
    return out


def hypothesize_chain(pose: tuple[float, float, float], free_ranges: np.ndarray,
                      hp: HyperParams,
                      max_range: float | None = None) -> dict[int, list[np.ndarray]]:
    """Anticipatory candidates along each clear heading: consecutive positions
    spaced by the influence radius, limited by the sensed range and the chain
    cap. Pure geometry; deduplication against the map happens at admission."""
    max_range = hp.lidar_range if max_range is None else max_range
    n_headings = hp.n_actions - 1
    free_ranges = np.asarray(free_ranges, dtype=float)
    if free_ranges.size != n_headings:
        raise ValueError(f"need {n_headings} heading ranges, got {free_ranges.size}")
    buffer = hp.agent_radius + hp.obstacle_padding
    origin = np.asarray(pose[:2], dtype=float)
    chains: dict[int, list[np.ndarray]] = {}
    for a in range(n_headings):
        clear = _heading_clear_distance(free_ranges[a], max_range, buffer)
        heading = 2.0 * np.pi * a / n_headings
        direction = np.array([np.cos(heading), np.sin(heading)])
        chain = []
        for i in range(1, hp.max_hypothesis_chain + 1):
            dist = i * hp.influence_radius
            if dist > clear + 1e-9:
                break
            chain.append(origin + dist * direction)
        chains[a] = chain
    return chains


# ---------------------------------------------------------------------------
# free energy gate


def candidate_free_energy(model: GenerativeModel, bin_index: int,
                          state_complexity_cost: float,
                          expanded: bool) -> float:
    """Free energy of explaining position evidence at a bin: negative log
    evidence under a uniform state prior plus a per-state complexity cost.
    ``expanded`` scores the hypothetical model with one extra state whose
    position likelihood concentrates on the bin."""
    a_p = model.a_p_norm()
    n = model.n_states
    lik = a_p[bin_index, :] if n else np.zeros(0)
    if expanded:
        # likelihood the expansion would assign to its own bin
        from .model import AP_NEW_COUNT
        new_lik = (AP_NEW_COUNT + COUNT_FLOOR) / (AP_NEW_COUNT + model.n_bins * COUNT_FLOOR)
        lik = np.append(lik, new_lik)
        n += 1
    if n == 0:
        return float("inf")
    evidence = float(lik.mean())  # uniform prior over states
    return -np.log(max(evidence, 1e-300)) + state_complexity_cost * n


def delta_f_gate(model: GenerativeModel, candidate_position,
                 hp: HyperParams) -> int | None:
    """Admit a candidate when the expanded model has lower free energy for
    the predicted position evidence. Returns the new state id, or None."""
    b = model.bins.index(candidate_position[0], candidate_position[1])
    f_current = candidate_free_energy(model, b, hp.state_complexity_cost, expanded=False)
    f_expanded = candidate_free_energy(model, b, hp.state_complexity_cost, expanded=True)
    if f_expanded - f_current < 0.0:
        return model.expand_state_dim(b)
    return None


def attach_observation(topo: TopoMap, model: GenerativeModel, state_id: int,
                       observation_id: int, rate: float = 1.0) -> None:
    """Link an observation to a node: records the id on the node (set
    semantics, prior observations retained) and reinforces the likelihood
    counts. Caller must ensure beliefs are confident."""
    if not (0 <= state_id < len(topo.nodes)):
        raise IndexError(f"unknown state {state_id}")
    node = topo.nodes[state_id]
    if observation_id not in node.observation_ids:
        node.observation_ids.append(observation_id)
    model.reinforce_observation(observation_id, state_id, rate)


# ---------------------------------------------------------------------------
# snapshot export


def snapshot_text(topo: TopoMap, model: GenerativeModel) -> str:
    """Plain-text map snapshot: nodes then weighted edges."""
    lines = ["nodes"]
    for n in topo.nodes:
        obs = ",".join(str(i) for i in n.observation_ids)
        lines.append(f"{n.state_id} {n.position[0]:.3f} {n.position[1]:.3f} "
                     f"{'visited' if n.visited else 'unvisited'} [{obs}]")
    lines.append("edges")
    for s, a, s2, p in topo.edges(model):
        lines.append(f"{s} -{a}-> {s2} {p:.4f}")
    return "\n".join(lines) + "\n"


def save_snapshot(topo: TopoMap, model: GenerativeModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(snapshot_text(topo, model))
