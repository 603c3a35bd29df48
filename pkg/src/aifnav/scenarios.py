"""Scripted demonstration scenarios for drift handling and obstacle adaptation.

The drift scenario drives two moves, one influence radius east then back
west, under branch-specific drift and world edits, and reports which
localisation outcome the return step resolved to:

  branch 1: heavy gain drift in a visually aliased arena; the return view
            matches the start observation at the expected state, so the
            prediction is trusted and the drift stays physically uncorrected.
  branch 2: gain drift on the way out, slip on the way back with noisy
            odometry; the view matches the outward observation elsewhere and
            perception wins.
  branch 3: as 2, but the surroundings change too; nothing matches and the
            agent is lost.
  branch 4: no drift, but the start view changes; the agent is sure of its
            position and files a new observation for the same state.

The obstacle scenario explores a small room, teleports a box onto a mapped
node, and tracks how fast the transitions into the blocked node are delisted
while a detour strengthens.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from . import cogmap
from .agent import NavigationAgent
from .cogmap import EDGE_LIST_FACTOR
from .evaluation import RunTrace, TraceRecord
from .inference import LocalisationOutcome
from .model import COUNT_FLOOR
from .simulator import DriftModel, edit_world, load_world

_BRANCH_EXPECTED = {
    1: LocalisationOutcome.TRUST_PREDICTION,
    2: LocalisationOutcome.TRUST_PERCEPTION,
    3: LocalisationOutcome.LOST,
    4: LocalisationOutcome.NOVEL_OBSERVATION_AT_KNOWN_STATE,
}


def drift_scenario(config) -> tuple[LocalisationOutcome, LocalisationOutcome,
                                    NavigationAgent, RunTrace]:
    branch = config.drift_branch
    expected = _BRANCH_EXPECTED[branch]
    world_name = {1: "open_arena", 2: "hall", 3: "hall", 4: "corridor"}[branch]
    world = load_world(world_name)
    hp = config.hyperparams
    east = 0
    west = hp.n_actions // 2  # opposite heading

    out_drift = DriftModel(translation_gain=2.0) if branch in (1, 2, 3) \
        else DriftModel()
    agent = NavigationAgent(world, hp, out_drift, world.spawns["start"],
                            seed=config.seed)
    start_xy = np.asarray(world.spawns["start"])

    trace = RunTrace()
    trace.append(TraceRecord(0, agent.true_pose, agent.true_pose,
                             tuple(agent.believed_position()), agent.actions.stay,
                             agent.coverage_area(), agent.traveled))
    first = agent.step(forced_action=east)
    trace.append(TraceRecord(1, agent.true_pose, first.result.reported_pose,
                             tuple(agent.believed_position()), east,
                             agent.coverage_area(), agent.traveled,
                             extra={"outcome": first.localisation.value}))

    if branch == 2:
        agent.drift = DriftModel(translation_gain=0.05,
                                 translation_noise_sigma=1.0)
    elif branch == 3:
        agent.drift = DriftModel(translation_gain=0.05,
                                 translation_noise_sigma=1.0)
        # the surroundings change right next to the agent: a long block
        # appears one step north, rewriting half of the view
        x, y = agent.true_pose[0], agent.true_pose[1]
        edit_world(world, (max(0.3, x - 1.5), y + 0.6,
                           min(world.width - 0.3, x + 1.5), y + 1.4), True)
    else:
        agent.drift = DriftModel()
        if branch == 4:
            # change the view at the start position without blocking the path
            edit_world(world, (max(0.3, start_xy[0] - 0.75), 1.7,
                               start_xy[0] + 0.75, 2.2), True)

    second = agent.step(forced_action=west)
    trace.append(TraceRecord(2, agent.true_pose, second.result.reported_pose,
                             tuple(agent.believed_position()), west,
                             agent.coverage_area(), agent.traveled,
                             extra={"outcome": second.localisation.value}))
    return second.localisation, expected, agent, trace


def obstacle_scenario(config, out: Path):
    """Box displacement demo: map the room, move the box onto a node, and
    watch the transition structure adapt while routing around it."""
    from .harness import (EXIT_OK, EXIT_TASK_FAILED, RunReport, _record,
                          _emit_artifacts)

    world = load_world("box_room")
    center = np.array([2.75, 2.75])
    box_a = (center[0] - 1.0 - 0.25, center[1] - 0.25,
             center[0] - 1.0 + 0.25, center[1] + 0.25)
    box_b = (center[0] - 0.25, center[1] - 1.0 - 0.25,
             center[0] + 0.25, center[1] - 1.0 + 0.25)
    edit_world(world, box_a, True)

    agent = NavigationAgent(world, config.hyperparams, config.drift,
                            world.spawns["start"], seed=config.seed)
    trace = RunTrace()
    trace.append(_record(agent, 0, agent.actions.stay, agent.true_pose, {}))
    t = 0
    explore_budget = max(config.step_budget - 20, 10)
    while t < explore_budget:
        t += 1
        outcome = agent.step()
        trace.append(_record(agent, t, outcome.action,
                             outcome.result.reported_pose,
                             {"phase": "explore"}))

    cogmap.save_snapshot(agent.topo, agent.model, out / "map_before.txt")

    # displace the box onto the mapped node nearest the new location
    blocked_center = np.array([center[0], center[1] - 1.0])
    blocked = agent.topo.nearest_node(blocked_center, visited_only=True)
    if blocked is None:
        blocked = agent.topo.nearest_node(blocked_center)
    blocked_id = blocked.state_id
    bx, by = blocked.position
    edit_world(world, box_a, False)
    edit_world(world, (bx - 0.25, by - 0.25, bx + 0.25, by + 0.25), True)

    def incoming_listed(model) -> list[tuple[int, int]]:
        pairs = []
        for a in range(model.actions.n_actions):
            if a == model.actions.stay:
                continue
            srcs = np.nonzero(model.b_s[blocked_id, :, a]
                              > EDGE_LIST_FACTOR * COUNT_FLOOR)[0]
            pairs.extend((int(s), a) for s in srcs if s != blocked_id)
        return pairs

    before_edges = incoming_listed(agent.model)
    b_norm_before = agent.model.b_s_norm().copy()

    # keep exploring; wandering around the box gathers the evidence that
    # suppresses the transitions into the blocked node
    steps_to_delist = None
    for k in range(1, 21):
        t += 1
        outcome = agent.step()
        trace.append(_record(agent, t, outcome.action,
                             outcome.result.reported_pose,
                             {"phase": "adapt"}))
        if not incoming_listed(agent.model) and steps_to_delist is None:
            steps_to_delist = k
            break

    cogmap.save_snapshot(agent.topo, agent.model, out / "map_after.txt")
    delisted = not incoming_listed(agent.model)

    # did any other transition gain probability while re-routing?
    b_norm_after = agent.model.b_s_norm()
    n_before = b_norm_before.shape[0]
    gain = b_norm_after[:n_before, :n_before, :] - b_norm_before
    gain[blocked_id, :, :] = 0.0
    gain[:, blocked_id, :] = 0.0
    detour_gain = float(gain.max())

    metrics = {
        "blocked_node": blocked_id,
        "edges_before": len(before_edges),
        "edges_after": len(incoming_listed(agent.model)),
        "delisted": int(delisted),
        "steps_to_delist": steps_to_delist if steps_to_delist is not None else -1,
        "detour_gain": round(detour_gain, 6),
    }
    plan_rows: list[dict] = []
    _emit_artifacts(agent, config, out, trace, plan_rows, metrics)
    ok = delisted and detour_gain > 0
    return RunReport(EXIT_OK if ok else EXIT_TASK_FAILED,
                     len(trace) - 1, metrics, str(out / "trace.jsonl"), agent)
