"""The navigation agent: one sense-infer-map-learn-plan transaction per step.

Each step renders a panorama, matches it against stored observations,
combines motion prediction with odometry and perceptual evidence into a
posterior, resolves the localisation outcome, grows the map from free-space
geometry behind the free energy gate, updates transition counts from both
physical and anticipated outcomes, and finally plans the next action by
expected free energy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import cogmap, inference, learning, perception, planning, simulator
from .inference import BeliefState, LocalisationOutcome, ObsMatchKind
from .model import (COUNT_FLOOR, ActionSpace, BinGrid, GenerativeModel,
                    HyperParams, Preferences)
from .simulator import DriftModel, World

CHECKPOINT_SCHEMA = 1


@dataclass
class StepOutcome:
    action: int
    result: simulator.StepResult
    localisation: LocalisationOutcome
    match_kind: ObsMatchKind
    observation_id: int | None
    vfe: float
    believed_state: int


class NavigationAgent:
    def __init__(self, world: World, hp: HyperParams, drift: DriftModel,
                 start_pose: tuple[float, float], seed: int = 0,
                 prefs: Preferences | None = None):
        hp.validate()
        self.world = world
        self.hp = hp
        self.drift = drift
        seq = np.random.SeedSequence(seed)
        drift_seq, plan_seq = seq.spawn(2)
        self.drift_rng = np.random.default_rng(drift_seq)
        self.plan_rng = np.random.default_rng(plan_seq)

        self.actions = ActionSpace(hp.n_actions)
        bins = BinGrid(world.bounds, hp.bin_size)
        self.model = GenerativeModel(self.actions, bins)
        self.topo = cogmap.TopoMap()
        self.store = perception.ObservationStore()
        self.prefs = (prefs or Preferences()).ensure_dims(0, bins.n_bins, 0)
        self.lost = False
        self.goal_obs_ids: set[int] = set()

        self.true_pose = (float(start_pose[0]), float(start_pose[1]), 0.0)
        self.traveled = 0.0
        self.covered: set[tuple[int, int]] = set()
        self.step_count = 0

        # seed the map with the start state and its panorama
        b0 = bins.index(*start_pose[:2])
        s0 = self.model.expand_state_dim(b0)
        self.topo.add_node(s0, np.asarray(start_pose[:2], dtype=float))
        self.model.confirm_position(s0, b0)
        pano = perception.render_panorama(world, self.true_pose, hp.lidar_range)
        o0 = self.store.add(pano)
        self.model.expand_observation_dim(s0)
        self.topo.nodes[s0].observation_ids.append(o0)
        self._sync_pref_dims()

        q_s = np.zeros(self.model.n_states)
        q_s[s0] = 1.0
        q_p = inference.position_evidence_bump(self.model, start_pose[:2], hp.bin_size)
        self.belief = BeliefState(q_s, q_p, vfe=0.0, confident=True)
        self._observe_coverage()
        self._grow_map(self._scan())

    # -- small helpers -------------------------------------------------------

    def _sync_pref_dims(self) -> None:
        self.prefs.ensure_dims(self.model.n_obs, self.model.n_bins, self.model.n_states)

    def _scan(self) -> np.ndarray:
        return simulator.lidar_scan(self.world, self.true_pose,
                                    self.hp.lidar_range, self.hp.lidar_beams)

    def _heading_ranges(self, scan: np.ndarray) -> np.ndarray:
        n_h = self.actions.n_headings
        idx = [int(round(a * self.hp.lidar_beams / n_h)) % self.hp.lidar_beams
               for a in range(n_h)]
        return scan[idx]

    def believed_position(self) -> np.ndarray:
        centers = self.model.bins.centers()
        return centers.T @ self.belief.q_p

    def _blur_bins(self, q_p: np.ndarray, sigma_m: float) -> np.ndarray:
        from scipy.ndimage import gaussian_filter
        bins = self.model.bins
        field = q_p.reshape(bins.ny, bins.nx)
        out = gaussian_filter(field, sigma=sigma_m / bins.bin_size,
                              mode="constant").ravel()
        total = out.sum()
        return out / total if total > 0 else q_p

    def believed_state(self) -> int:
        return int(np.argmax(self.belief.q_s))

    def coverage_area(self) -> float:
        return len(self.covered) * self.world.resolution ** 2

    def coverage_fraction(self) -> float:
        return len(self.covered) / max(self.world.free_cells(), 1)

    def _observe_coverage(self) -> None:
        self.covered |= simulator.visible_free_cells(
            self.world, self.true_pose, self.hp.lidar_range, self.hp.lidar_beams)

    # -- goal and lost-mode preferences ---------------------------------------

    def set_goal_panorama(self, panorama: np.ndarray, weight: float = 10.0) -> int:
        """Install a goal: the stored observations matching the panorama best
        become preferred. Returns the number of matching observations."""
        scores = self.store.score_all(panorama)
        cut = max(self.hp.ssim_match_threshold,
                  float(scores.max()) - 0.02) if scores.size else 1.0
        ids = [i for i, s in enumerate(scores) if s >= cut]
        self.goal_obs_ids = set(ids)
        self._sync_pref_dims()
        self.prefs.clear_goals()
        for i in ids:
            self.prefs.c_o[i] = 1.0
        self.prefs.pragmatic_weight = weight
        return len(ids)

    def goal_reached(self) -> bool:
        if not self.goal_obs_ids:
            return False
        node = self.topo.nodes[self.believed_state()]
        sure = inference.zscore_confidence(self.belief.q_p) >= self.hp.lost_zscore_threshold
        return sure and bool(set(node.observation_ids) & self.goal_obs_ids)

    def _planning_prefs(self) -> Preferences:
        if not self.lost:
            return self.prefs
        lost = Preferences(c_c=self.prefs.c_c, pragmatic_weight=2.0)
        lost.ensure_dims(self.model.n_obs, self.model.n_bins, self.model.n_states)
        lost.c_o[:] = 1.0  # prefer re-observing anything known
        return lost

    # -- map growth ------------------------------------------------------------

    def _point_clear(self, scan: np.ndarray, origin: np.ndarray,
                     point: np.ndarray) -> bool:
        """Is a disc of one collision buffer around the point inside sensed
        free space? Checks every beam overlapping the disc's angular window."""
        buffer = self.hp.agent_radius + self.hp.obstacle_padding
        v = point - origin
        d = float(np.linalg.norm(v))
        if d < 1e-9:
            return True
        theta = np.arctan2(v[1], v[0])
        half_window = np.arcsin(min(1.0, buffer / d)) + np.pi / self.hp.lidar_beams
        beams = 2.0 * np.pi * np.arange(self.hp.lidar_beams) / self.hp.lidar_beams
        offset = np.abs(np.angle(np.exp(1j * (beams - theta))))
        need = min(d + buffer, self.hp.lidar_range - 1e-6)
        return bool((scan[offset <= half_window] >= need).all())

    def _grow_map(self, scan: np.ndarray) -> None:
        """Hypothesise chained nodes along clear headings, admit them through
        the free energy gate, and seed/weaken anticipated transitions."""
        heading_ranges = self._heading_ranges(scan)
        s_here = self.believed_state()
        here = self.topo.nodes[s_here].position
        pose = (here[0], here[1], self.true_pose[2])
        chains = cogmap.hypothesize_chain(pose, heading_ranges, self.hp)
        for a, chain in sorted(chains.items()):
            prev = s_here
            for point in chain:
                near = self.topo.nearest_node(point, within=self.hp.influence_radius - 1e-9)
                if near is not None:
                    # anticipate reaching (or failing to reach) the known node
                    link = near.state_id
                    reachable = self._point_clear(scan, np.asarray(here),
                                                  near.position)
                    if link != prev:
                        learning.apply_transition_outcome(
                            self.model, _delta(self.model.n_states, prev),
                            _delta(self.model.n_states, link), a,
                            learning.OutcomeKind.PREDICTED_POSSIBLE if reachable
                            else learning.OutcomeKind.PREDICTED_IMPOSSIBLE)
                    if reachable:
                        prev = link
                    continue
                if not self._point_clear(scan, np.asarray(here), point):
                    break
                link = cogmap.delta_f_gate(self.model, point, self.hp)
                if link is None:
                    break
                self.topo.add_node(link, point)
                self._sync_pref_dims()
                self._grow_beliefs()
                if link != prev:
                    learning.apply_transition_outcome(
                        self.model, _delta(self.model.n_states, prev),
                        _delta(self.model.n_states, link), a,
                        learning.OutcomeKind.PREDICTED_POSSIBLE)
                prev = link
        self._weaken_blocked_edges(scan)
        self._suppress_occupied_nodes(scan)

    def _weaken_blocked_edges(self, scan: np.ndarray) -> None:
        """Anticipated-impossible updates for listed edges whose target the
        lidar shows to be unreachable from here."""
        s_here = self.believed_state()
        here = self.topo.nodes[s_here].position
        buffer = self.hp.agent_radius + self.hp.obstacle_padding
        for a, target in sorted(planning.feasible_actions(self.model, s_here).items()):
            tpos = self.topo.nodes[target].position
            d = float(np.linalg.norm(tpos - here))
            direction = float(np.arctan2(tpos[1] - here[1], tpos[0] - here[0]))
            beam = int(round(direction / (2 * np.pi / self.hp.lidar_beams))) \
                % self.hp.lidar_beams
            clear = float(scan[beam])
            if clear < self.hp.lidar_range - 1e-9 and clear - buffer < d:
                learning.apply_transition_outcome(
                    self.model, _delta(self.model.n_states, s_here),
                    _delta(self.model.n_states, target), a,
                    learning.OutcomeKind.PREDICTED_IMPOSSIBLE)

    def _suppress_occupied_nodes(self, scan: np.ndarray) -> None:
        """A sighted obstacle inside a node's own disc makes the node
        inaccessible: every listed transition into it is anticipated
        impossible, whatever the source. Occluded nodes give no evidence."""
        here = self.topo.nodes[self.believed_state()].position
        buffer = self.hp.agent_radius + self.hp.obstacle_padding
        beams = 2.0 * np.pi * np.arange(self.hp.lidar_beams) / self.hp.lidar_beams
        thresh = cogmap.EDGE_LIST_FACTOR * COUNT_FLOOR
        for node in self.topo.nodes:
            v = node.position - here
            d = float(np.linalg.norm(v))
            if d < 1e-6 or d > self.hp.lidar_range - buffer:
                continue
            half_window = np.arcsin(min(1.0, buffer / d)) + np.pi / self.hp.lidar_beams
            offset = np.abs(np.angle(np.exp(1j * (beams - np.arctan2(v[1], v[0])))))
            window = scan[offset <= half_window]
            if window.size == 0:
                continue
            nearest_hit = float(window.min())
            # grid quantisation can push an obstacle's face well outside the
            # node disc, so accept hits up to two buffers short of the centre
            if not (d - 2.0 * buffer <= nearest_hit < d + buffer):
                continue  # either clear or occluded, no blockage evidence
            t = node.state_id
            for a in range(self.model.actions.n_actions):
                if a == self.model.actions.stay:
                    continue
                srcs = np.nonzero(self.model.b_s[t, :, a] > thresh)[0]
                for s in srcs:
                    if s != t:
                        learning.apply_transition_outcome(
                            self.model, _delta(self.model.n_states, int(s)),
                            _delta(self.model.n_states, t), a,
                            learning.OutcomeKind.PREDICTED_IMPOSSIBLE)

    def _grow_beliefs(self) -> None:
        n = self.model.n_states
        if self.belief.q_s.size < n:
            q = np.zeros(n)
            q[: self.belief.q_s.size] = self.belief.q_s
            self.belief.q_s = q

    # -- one agent step ---------------------------------------------------------

    def step(self, forced_action: int | None = None) -> StepOutcome:
        hp = self.hp
        prev_belief = self.belief.copy()
        s_prev = self.believed_state()
        # motion is planned in node space; the trace still logs the q_p mean
        prev_pos = self.topo.nodes[s_prev].position

        # plan (scripted scenarios may force the motion instead)
        if forced_action is None:
            scan = self._scan()
            heading_ranges = self._heading_ranges(scan)
            blocked = self._blocked_actions(heading_ranges, s_prev)
            plan = planning.mcts_plan(self.model, self.belief.q_s,
                                      self._planning_prefs(), hp, self.plan_rng,
                                      blocked_root_actions=blocked)
            action = plan.action
            self._last_plan = plan
        else:
            action = forced_action
            self._last_plan = None

        # execute
        target = planning.feasible_actions(self.model, s_prev).get(action)
        if action == self.actions.stay or target is None:
            heading = 0.0 if action == self.actions.stay else self.actions.heading(action)
            distance = 0.0 if action == self.actions.stay else hp.influence_radius
        else:
            tpos = self.topo.nodes[target].position
            heading = float(np.arctan2(tpos[1] - prev_pos[1], tpos[0] - prev_pos[0]))
            distance = float(np.clip(np.linalg.norm(tpos - prev_pos),
                                     0.0, 2.0 * hp.influence_radius))
        pose_before = np.asarray(self.true_pose[:2])
        result = simulator.step(self.world, self.true_pose, heading, distance,
                                self.drift, self.drift_rng, hp.agent_radius)
        self.true_pose = result.true_pose
        self.traveled += result.traveled
        self._observe_coverage()

        # infer; odometry is chained onto the believed position, not the true
        # one, and its evidence widens with the configured odometry noise
        reported_delta = np.asarray(result.reported_pose[:2]) - pose_before
        odom_estimate = prev_pos + reported_delta
        pos_evidence = inference.position_evidence_bump(
            self.model, odom_estimate,
            hp.bin_size + self.drift.translation_noise_sigma)
        # a reported stop means the transition did not happen; predict as stay
        predict_action = self.actions.stay if result.collided else action
        priors = inference.predict_beliefs(self.model, prev_belief, predict_action)
        # odometry noise widens where the motion could have ended up
        if self.drift.translation_noise_sigma > 0:
            priors = (priors[0],
                      self._blur_bins(priors[1], self.drift.translation_noise_sigma))
        panorama = perception.render_panorama(self.world, self.true_pose, hp.lidar_range)
        match = perception.match_observation(panorama, self.store,
                                             hp.ssim_match_threshold)
        if len(self.store) and hp.probabilistic_obs_evidence:
            evidence = perception.observation_evidence(
                self.store.score_all(panorama), hp.evidence_temperature)
        elif len(self.store):
            evidence = perception.observation_evidence(
                self.store.score_all(panorama), hard=True)
        else:
            evidence = np.zeros(0)
        obs_row = (evidence @ self.model.a_o_norm()) if len(self.store) \
            else np.ones(self.model.n_states)
        belief = inference.posterior_update(self.model, priors, obs_row,
                                            pos_evidence, hp.lost_zscore_threshold)

        # localisation outcome; odometry noisier than half the node spacing
        # cannot single out a node regardless of how the z-score clips
        q_p_motion = priors[1] * pos_evidence
        if q_p_motion.sum() > 0:
            q_p_motion = q_p_motion / q_p_motion.sum()
        else:
            q_p_motion = priors[1]
        odom_resolves = self.drift.translation_noise_sigma < hp.bin_size
        motion_confident = odom_resolves and \
            inference.zscore_confidence(q_p_motion) >= hp.lost_zscore_threshold
        position_confident = odom_resolves and \
            inference.zscore_confidence(belief.q_p) >= hp.lost_zscore_threshold
        expected_state = int(np.argmax(priors[0]))
        match_kind = self._classify_match(match, expected_state, priors[0])
        outcome = inference.resolve_localisation(motion_confident, match_kind,
                                                 position_confident)

        obs_id = match.observation_id
        if outcome is LocalisationOutcome.TRUST_PERCEPTION:
            holder = self._holder_of(obs_id, priors[0])
            belief = self._snap_to_node(holder)
            position_confident = True
            cogmap.attach_observation(self.topo, self.model, holder, obs_id)
        elif outcome is LocalisationOutcome.TRUST_PREDICTION:
            # reinforce only a match at the expected place; a match from
            # elsewhere is aliasing and must not be linked to this state
            if (position_confident and obs_id is not None
                    and match_kind is ObsMatchKind.KNOWN_AT_EXPECTED):
                cogmap.attach_observation(self.topo, self.model,
                                          int(np.argmax(belief.q_s)), obs_id)
        elif outcome is LocalisationOutcome.NOVEL_OBSERVATION_AT_KNOWN_STATE:
            s_now = int(np.argmax(belief.q_s))
            obs_id = self.store.add(panorama)
            self.model.expand_observation_dim(s_now)
            node = self.topo.nodes[s_now]
            if obs_id not in node.observation_ids:
                node.observation_ids.append(obs_id)
            self._sync_pref_dims()
        self.belief = belief
        self.lost = outcome is LocalisationOutcome.LOST or (self.lost
                                                            and not position_confident)

        # learning from the physical outcome
        s_now = self.believed_state()
        if action != self.actions.stay:
            if result.collided and target is not None:
                learning.apply_transition_outcome(
                    self.model, _delta(self.model.n_states, s_prev),
                    _delta(self.model.n_states, target), action,
                    learning.OutcomeKind.IMPOSSIBLE)
            elif not result.collided and s_now != s_prev and position_confident:
                learning.apply_transition_outcome(
                    self.model, prev_belief.q_s, belief.q_s, action,
                    learning.OutcomeKind.POSSIBLE)
        if position_confident:
            s_star = self.believed_state()
            self.model.confirm_position(s_star, self.model.state_bin(s_star))

        # map growth from the new vantage point
        if position_confident:
            self._grow_map(self._scan())

        self.step_count += 1
        return StepOutcome(action, result, outcome, match_kind, obs_id,
                           belief.vfe, s_now)

    def _blocked_actions(self, heading_ranges: np.ndarray, s_here: int) -> set[int]:
        buffer = self.hp.agent_radius + self.hp.obstacle_padding
        blocked = set()
        for a, target in planning.feasible_actions(self.model, s_here).items():
            d = float(np.linalg.norm(self.topo.nodes[target].position
                                     - self.topo.nodes[s_here].position))
            if heading_ranges[a] < self.hp.lidar_range - 1e-9 \
                    and heading_ranges[a] - buffer < d:
                blocked.add(a)
        return blocked

    def _classify_match(self, match: perception.MatchResult, expected_state: int,
                        prior_q_s: np.ndarray) -> ObsMatchKind:
        if match.novel:
            return ObsMatchKind.NO_MATCH
        holder = self._holder_of(match.observation_id, prior_q_s)
        d = float(np.linalg.norm(self.topo.nodes[holder].position
                                 - self.topo.nodes[expected_state].position))
        # a match at a neighbouring node is already evidence of being elsewhere
        if d <= self.hp.influence_radius / 2.0:
            return ObsMatchKind.KNOWN_AT_EXPECTED
        return ObsMatchKind.KNOWN_ELSEWHERE

    def _holder_of(self, obs_id: int, weights: np.ndarray) -> int:
        holders = [n.state_id for n in self.topo.nodes
                   if obs_id in n.observation_ids]
        if not holders:
            return int(np.argmax(self.model.a_o_norm()[obs_id, :]))
        return max(holders, key=lambda s: (weights[s], -s))

    def _snap_to_node(self, state_id: int) -> BeliefState:
        q_s = _delta(self.model.n_states, state_id)
        q_p = inference.position_evidence_bump(
            self.model, self.topo.nodes[state_id].position, self.hp.bin_size)
        return BeliefState(q_s, q_p, vfe=0.0, confident=True)

    # -- persistence -------------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        data = self.model.to_arrays()
        data["agent_meta"] = np.frombuffer(json.dumps({
            "schema": CHECKPOINT_SCHEMA,
            "hp": self.hp.__dict__,
            "drift": self.drift.__dict__,
            "true_pose": list(self.true_pose),
            "traveled": self.traveled,
            "step_count": self.step_count,
            "lost": self.lost,
            "goal_obs_ids": sorted(self.goal_obs_ids),
            "nodes": [{"id": n.state_id, "pos": list(map(float, n.position)),
                       "obs": n.observation_ids} for n in self.topo.nodes],
            "covered": sorted(self.covered),
            "drift_rng": self.drift_rng.bit_generator.state,
            "plan_rng": self.plan_rng.bit_generator.state,
            "prefs": {"c_c": self.prefs.c_c,
                      "pragmatic_weight": self.prefs.pragmatic_weight},
        }).encode(), dtype=np.uint8)
        data["panoramas"] = (np.stack(self.store.panoramas)
                             if len(self.store) else np.zeros((0, 0, 0)))
        data["belief_q_s"] = self.belief.q_s
        data["belief_q_p"] = self.belief.q_p
        data["c_o"] = self.prefs.c_o
        data["c_p"] = self.prefs.c_p
        data["c_s"] = self.prefs.c_s
        np.savez_compressed(path, **data)

    @classmethod
    def load_checkpoint(cls, path, world: World) -> "NavigationAgent":
        with np.load(path) as data:
            meta = json.loads(bytes(np.asarray(data["agent_meta"])).decode())
            if meta["schema"] != CHECKPOINT_SCHEMA:
                raise ValueError(f"unsupported checkpoint schema {meta['schema']}")
            agent = cls.__new__(cls)
            agent.world = world
            agent.hp = HyperParams(**meta["hp"])
            agent.drift = DriftModel(**meta["drift"])
            agent.actions = ActionSpace(agent.hp.n_actions)
            agent.model = GenerativeModel.from_arrays(data)
            agent.topo = cogmap.TopoMap()
            for nd in meta["nodes"]:
                node = agent.topo.add_node(nd["id"], nd["pos"])
                node.observation_ids = list(nd["obs"])
            agent.store = perception.ObservationStore(
                [p for p in np.asarray(data["panoramas"])])
            agent.prefs = Preferences(
                c_o=np.array(data["c_o"]), c_p=np.array(data["c_p"]),
                c_s=np.array(data["c_s"]), c_c=meta["prefs"]["c_c"],
                pragmatic_weight=meta["prefs"]["pragmatic_weight"])
            agent.lost = meta["lost"]
            agent.goal_obs_ids = set(meta["goal_obs_ids"])
            agent.true_pose = tuple(meta["true_pose"])
            agent.traveled = meta["traveled"]
            agent.step_count = meta["step_count"]
            agent.covered = set(tuple(c) for c in meta["covered"])
            agent.belief = BeliefState(np.array(data["belief_q_s"]),
                                       np.array(data["belief_q_p"]),
                                       confident=True)
            agent.drift_rng = np.random.default_rng()
            agent.drift_rng.bit_generator.state = meta["drift_rng"]
            agent.plan_rng = np.random.default_rng()
            agent.plan_rng.bit_generator.state = meta["plan_rng"]
            return agent


def _delta(n: int, index: int) -> np.ndarray:
    v = np.zeros(n)
    v[index] = 1.0
    return v
