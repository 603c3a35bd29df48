"""Exploration and goal-reaching metrics, the A* oracle and the frontier baseline."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from .cogmap import TopoMap
from .model import GenerativeModel
from .simulator import World, lidar_scan, visible_free_cells

TRACE_SCHEMA = "aifnav-trace-1"


@dataclass
class TraceRecord:
    t: int
    true_pose: tuple[float, float, float]
    reported_pose: tuple[float, float, float]
    believed_pose: tuple[float, float]
    action: int
    covered_area: float
    traveled: float
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "t": self.t,
            "true_pose": [round(v, 9) for v in self.true_pose],
            "reported_pose": [round(v, 9) for v in self.reported_pose],
            "believed_pose": [round(v, 9) for v in self.believed_pose],
            "action": self.action,
            "covered_area": round(self.covered_area, 9),
            "traveled": round(self.traveled, 9),
        }
        payload.update(self.extra)
        return json.dumps(payload, sort_keys=True)


class RunTrace:
    """Per-step log of a run; covered area and travel are monotone."""

    def __init__(self):
        self.records: list[TraceRecord] = []

    def append(self, record: TraceRecord) -> None:
        if self.records:
            last = self.records[-1]
            if record.traveled < last.traveled - 1e-9:
                raise ValueError("traveled distance must be monotone")
            if record.covered_area < last.covered_area - 1e-9:
                raise ValueError("covered area must be monotone")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def save_jsonl(self, path, header: dict | None = None) -> None:
        with open(path, "w") as fh:
            head = {"schema": TRACE_SCHEMA}
            head.update(header or {})
            fh.write(json.dumps(head, sort_keys=True) + "\n")
            for rec in self.records:
                fh.write(rec.to_json() + "\n")

    @classmethod
    def load_jsonl(cls, path) -> tuple["RunTrace", dict]:
        trace = cls()
        header: dict = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as err:
                    raise ValueError(f"corrupt trace at line {lineno}: {err}") from None
                if lineno == 1:
                    if obj.get("schema") != TRACE_SCHEMA:
                        raise ValueError(
                            f"trace schema mismatch: {obj.get('schema')!r} != {TRACE_SCHEMA!r}")
                    header = obj
                    continue
                known = {"t", "true_pose", "reported_pose", "believed_pose",
                         "action", "covered_area", "traveled"}
                try:
                    trace.append(TraceRecord(
                        t=obj["t"],
                        true_pose=tuple(obj["true_pose"]),
                        reported_pose=tuple(obj["reported_pose"]),
                        believed_pose=tuple(obj["believed_pose"]),
                        action=obj["action"],
                        covered_area=obj["covered_area"],
                        traveled=obj["traveled"],
                        extra={k: v for k, v in obj.items() if k not in known},
                    ))
                except KeyError as err:
                    raise ValueError(f"corrupt trace at line {lineno}: missing {err}") from None
        return trace, header


# ---------------------------------------------------------------------------
# metrics


def coverage_efficiency(trace: RunTrace) -> float:
    """Final covered area divided by final distance travelled (m2/m)."""
    if not trace.records:
        raise ValueError("empty trace")
    final = trace.records[-1]
    if final.traveled <= 0:
        raise ValueError("zero travel distance")
    return final.covered_area / final.traveled


def nauc(trace: RunTrace, total_free_area: float) -> float:
    """Normalised area under the coverage-fraction vs normalised-distance curve."""
    if not trace.records:
        raise ValueError("empty trace")
    if total_free_area <= 0:
        raise ValueError("total free area must be positive")
    dist = np.array([r.traveled for r in trace.records])
    frac = np.clip([r.covered_area / total_free_area for r in trace.records], 0.0, 1.0)
    total = dist[-1]
    if total <= 0:
        return float(frac[-1])
    x = dist / total
    return float(np.trapezoid(frac, x))


def rmse_xy(estimated: list[tuple[float, float]],
            ground_truth: list[tuple[float, float]]) -> float:
    """Root mean square positional error over time-aligned trajectories."""
    if len(estimated) != len(ground_truth):
        raise ValueError("trajectory length mismatch")
    est = np.asarray(estimated, dtype=float)
    gt = np.asarray(ground_truth, dtype=float)
    return float(np.sqrt(np.mean(np.sum((est - gt) ** 2, axis=1))))


# ---------------------------------------------------------------------------
# shortest-path oracle over the topological graph


def astar_shortest(topo: TopoMap, model: GenerativeModel, start: int,
                   goals: set[int] | list[int]) -> float | None:
    """Optimal path length in meters from a start state to the closest goal
    state over listed edges with Euclidean weights, A* with the straight-line
    heuristic. Returns None when no goal is reachable."""
    goals = set(int(g) for g in goals)
    if not goals:
        return None
    if start in goals:
        return 0.0
    pos = topo.positions()
    goal_pos = pos[sorted(goals)]

    def heuristic(s: int) -> float:
        return float(np.min(np.linalg.norm(goal_pos - pos[s][None, :], axis=1)))

    adjacency: dict[int, list[tuple[int, float]]] = {}
    for s, _a, s2, _p in topo.edges(model):
        adjacency.setdefault(s, []).append(
            (s2, float(np.linalg.norm(pos[s2] - pos[s]))))

    frontier = [(heuristic(start), start, 0.0)]
    best_cost = {start: 0.0}
    while frontier:
        _f, s, g_cost = heapq.heappop(frontier)
        if s in goals:
            return g_cost
        if g_cost > best_cost.get(s, np.inf):
            continue
        for s2, w in adjacency.get(s, []):
            cost = g_cost + w
            if cost < best_cost.get(s2, np.inf):
                best_cost[s2] = cost
                heapq.heappush(frontier, (cost + heuristic(s2), s2, cost))
    return None


# ---------------------------------------------------------------------------
# occupancy estimate and frontier baseline

UNKNOWN, KNOWN_FREE, KNOWN_OCC = 0, 1, 2


class OccupancyEstimate:
    """Coarse map built from lidar sweeps; the frontier explorer's belief."""

    def __init__(self, world_shape: tuple[int, int], resolution: float):
        self.grid = np.zeros(world_shape, dtype=np.uint8)
        self.resolution = resolution

    def integrate_scan(self, world: World, pose, max_range: float, n_beams: int) -> None:
        x, y = pose[0], pose[1]
        for cell in visible_free_cells(world, pose, max_range, n_beams):
            self.grid[cell[1], cell[0]] = KNOWN_FREE
        # mark the hit cells occupied
        for i in range(n_beams):
            h = 2.0 * np.pi * i / n_beams
            from .simulator import raycast
            r = raycast(world, x, y, h, max_range)
            if r >= max_range - 1e-9:
                continue
            hx = x + (r + self.resolution / 2.0) * np.cos(h)
            hy = y + (r + self.resolution / 2.0) * np.sin(h)
            ix, iy = int(hx / self.resolution), int(hy / self.resolution)
            if 0 <= ix < self.grid.shape[1] and 0 <= iy < self.grid.shape[0]:
                self.grid[iy, ix] = KNOWN_OCC


def frontier_baseline_step(occupancy: OccupancyEstimate,
                           pose: tuple[float, float, float]) -> tuple[int, int] | None:
    """Nearest frontier cell: a known-free cell adjacent to unknown space,
    reached by BFS through known-free cells from the pose. None means the
    exploration is complete."""
    grid = occupancy.grid
    res = occupancy.resolution
    start = (int(pose[0] / res), int(pose[1] / res))
    h, w = grid.shape

    def is_frontier(ix: int, iy: int) -> bool:
        if grid[iy, ix] != KNOWN_FREE:
            return False
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = ix + dx, iy + dy
            if 0 <= nx < w and 0 <= ny < h and grid[ny, nx] == UNKNOWN:
                return True
        return False

    seen = {start}
    queue = [start]
    while queue:
        nxt = []
        for ix, iy in queue:
            if is_frontier(ix, iy) and (ix, iy) != start:
                return (ix, iy)
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nx, ny = ix + dx, iy + dy
                if (0 <= nx < w and 0 <= ny < h and (nx, ny) not in seen
                        and grid[ny, nx] == KNOWN_FREE):
                    seen.add((nx, ny))
                    nxt.append((nx, ny))
        queue = nxt
    return None


class FrontierExplorer:
    """Classic nearest-frontier exploration over the same motion primitives as
    the main agent; the comparison baseline."""

    def __init__(self, world: World, hp, drift, rng: np.random.Generator):
        from .model import ActionSpace
        self.world = world
        self.hp = hp
        self.drift = drift
        self.rng = rng
        self.actions = ActionSpace(hp.n_actions)
        self.occupancy = OccupancyEstimate(world.grid.shape, world.resolution)

    def run(self, start_pose, step_budget: int, coverage_target: float = 0.95) -> RunTrace:
        from .simulator import step as sim_step
        trace = RunTrace()
        pose = (float(start_pose[0]), float(start_pose[1]), 0.0)
        covered: set[tuple[int, int]] = set()
        traveled = 0.0
        free_total = self.world.free_cells()
        cell_area = self.world.resolution ** 2
        for t in range(step_budget):
            self.occupancy.integrate_scan(self.world, pose,
                                          self.hp.lidar_range, self.hp.lidar_beams)
            covered |= visible_free_cells(self.world, pose,
                                          self.hp.lidar_range, self.hp.lidar_beams)
            target = frontier_baseline_step(self.occupancy, pose)
            area = len(covered) * cell_area
            if target is None or len(covered) >= coverage_target * free_total:
                trace.append(TraceRecord(t, pose, pose, pose[:2],
                                         self.actions.stay, area, traveled))
                break
            tx = (target[0] + 0.5) * self.world.resolution
            ty = (target[1] + 0.5) * self.world.resolution
            heading = float(np.arctan2(ty - pose[1], tx - pose[0]))
            action = self.actions.nearest(heading)
            dist = min(self.hp.influence_radius,
                       float(np.hypot(tx - pose[0], ty - pose[1])))
            result = sim_step(self.world, pose, self.actions.heading(action),
                              dist, self.drift, self.rng, self.hp.agent_radius)
            if result.collided and result.traveled < self.world.resolution:
                # nudge along the best-clearing neighbour heading instead
                scan = lidar_scan(self.world, pose, self.hp.lidar_range,
                                  self.hp.n_actions - 1)
                action = int(np.argmax(scan))
                result = sim_step(self.world, pose, self.actions.heading(action),
                                  dist, self.drift, self.rng, self.hp.agent_radius)
            traveled += result.traveled
            pose = result.true_pose
            trace.append(TraceRecord(t, pose, result.reported_pose, pose[:2],
                                     action, area, traveled))
        return trace
