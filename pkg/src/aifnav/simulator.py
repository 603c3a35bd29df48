"""Deterministic 2D occupancy-grid world with drifty motion and raycast sensing.

The world is a boolean grid (True = occupied) at a fixed resolution in
meters/cell, with the border always occupied. Motion is turn-then-translate:
an action sets the heading, then the agent translates until the commanded
distance or the first obstacle contact. Odometry drift is modelled by a
translation gain plus Gaussian noise; the reported odometry reflects the
commanded motion, not the true one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OCCUPIED = "#"
FREE = "."


class WorldParseError(ValueError):
    def __init__(self, message: str, line: int, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class World:
    """Occupancy bitmap plus named spawn points. grid[iy, ix], row 0 at y=0."""

    def __init__(self, grid: np.ndarray, resolution: float,
                 spawns: dict[str, tuple[float, float]] | None = None):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        grid = np.asarray(grid, dtype=bool)
        if grid.ndim != 2 or grid.shape[0] < 3 or grid.shape[1] < 3:
            raise ValueError("grid must be 2-D and at least 3x3")
        if not (grid[0, :].all() and grid[-1, :].all()
                and grid[:, 0].all() and grid[:, -1].all()):
            raise ValueError("border cells must be occupied")
        self.grid = grid
        self.resolution = float(resolution)
        self.spawns = dict(spawns or {})

    @property
    def width(self) -> float:
        return self.grid.shape[1] * self.resolution

    @property
    def height(self) -> float:
        return self.grid.shape[0] * self.resolution

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (0.0, 0.0, self.width, self.height)

    def cell(self, x: float, y: float) -> tuple[int, int]:
        return (int(x / self.resolution), int(y / self.resolution))

    def occupied(self, x: float, y: float) -> bool:
        ix, iy = self.cell(x, y)
        if not (0 <= ix < self.grid.shape[1] and 0 <= iy < self.grid.shape[0]):
            return True
        return bool(self.grid[iy, ix])

    def free_area(self) -> float:
        return float((~self.grid).sum()) * self.resolution ** 2

    def free_cells(self) -> int:
        return int((~self.grid).sum())

    def copy(self) -> "World":
        return World(self.grid.copy(), self.resolution, dict(self.spawns))


@dataclass
class DriftModel:
    """Systematic translation gain plus per-step Gaussian noise. gain=1 and
    zero sigmas give perfect odometry."""

    translation_gain: float = 1.0
    translation_noise_sigma: float = 0.0
    rotation_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.translation_noise_sigma < 0 or self.rotation_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass
class StepResult:
    true_pose: tuple[float, float, float]
    reported_pose: tuple[float, float, float]
    collided: bool
    traveled: float
    commanded: float


def _free_distance(world: World, x: float, y: float, heading: float,
                   max_dist: float, clearance: float) -> float:
    """Longest travel along the heading keeping a disc of radius `clearance`
    out of occupied cells. Marches in sub-resolution steps."""
    step = world.resolution / 4.0
    n = int(np.ceil(max_dist / step))
    if n == 0:
        return 0.0
    ds = np.minimum(step * np.arange(1, n + 1), max_dist)
    cx = x + ds * np.cos(heading)
    cy = y + ds * np.sin(heading)
    blocked = np.zeros(len(ds), dtype=bool)
    offsets = [(0.0, 0.0)]
    if clearance > 0:
        for ang in np.linspace(0, 2 * np.pi, 8, endpoint=False):
            offsets.append((clearance * np.cos(ang), clearance * np.sin(ang)))
    for ox, oy in offsets:
        ix = ((cx + ox) / world.resolution).astype(int)
        iy = ((cy + oy) / world.resolution).astype(int)
        inside = ((ix >= 0) & (ix < world.grid.shape[1])
                  & (iy >= 0) & (iy < world.grid.shape[0]))
        hit = ~inside
        hit[inside] = world.grid[iy[inside], ix[inside]]
        blocked |= hit
    if not blocked.any():
        return max_dist
    first = int(np.argmax(blocked))
    return float(ds[first - 1]) if first > 0 else 0.0


def step(world: World, pose: tuple[float, float, float], heading: float,
         distance: float, drift: DriftModel, rng: np.random.Generator,
         agent_radius: float = 0.0) -> StepResult:
    """Execute one turn-then-translate motion.

    True displacement is commanded*gain plus noise, truncated at the first
    obstacle contact. Reported odometry integrates the commanded motion plus
    independent noise, so it matches the true pose only when drift is off.
    """
    x, y, th = pose
    if world.occupied(x, y):
        raise ValueError("pose starts inside an obstacle")
    true_heading = heading + (rng.normal(0.0, drift.rotation_noise_sigma)
                              if drift.rotation_noise_sigma > 0 else 0.0)
    intended = distance * drift.translation_gain
    if drift.translation_noise_sigma > 0:
        intended += rng.normal(0.0, drift.translation_noise_sigma)
    intended = max(0.0, intended)
    free = _free_distance(world, x, y, true_heading, intended + 1e-9, agent_radius)
    traveled = min(intended, free)
    collided = traveled < intended - 1e-9
    nx = x + traveled * np.cos(true_heading)
    ny = y + traveled * np.sin(true_heading)

    # Odometry sees the commanded motion (wheel rotation), not ground slip;
    # when the controller reports an early stop it sees the wheel-frame
    # truncated distance instead.
    gain = drift.translation_gain if drift.translation_gain > 1e-9 else 1.0
    reported_dist = distance if not collided else traveled / gain
    if drift.translation_noise_sigma > 0:
        reported_dist += rng.normal(0.0, drift.translation_noise_sigma)
    return StepResult(
        true_pose=(float(nx), float(ny), float(true_heading)),
        reported_pose=(float(x + reported_dist * np.cos(heading)),
                       float(y + reported_dist * np.sin(heading)),
                       float(heading)),
        collided=bool(collided),
        traveled=float(traveled),
        commanded=float(distance),
    )


def raycast(world: World, x: float, y: float, heading: float, max_range: float) -> float:
    """Distance along the heading to the first occupied cell, capped at max_range."""
    step_len = world.resolution / 4.0
    n = int(np.ceil(max_range / step_len))
    ds = np.minimum(step_len * np.arange(1, n + 1), max_range)
    px = ((x + ds * np.cos(heading)) / world.resolution).astype(int)
    py = ((y + ds * np.sin(heading)) / world.resolution).astype(int)
    inside = ((px >= 0) & (px < world.grid.shape[1])
              & (py >= 0) & (py < world.grid.shape[0]))
    hit = ~inside
    hit[inside] = world.grid[py[inside], px[inside]]
    if not hit.any():
        return float(max_range)
    first = int(np.argmax(hit))
    return float(ds[first - 1]) if first > 0 else 0.0


def lidar_scan(world: World, pose: tuple[float, float, float],
               max_range: float = 12.0, n_beams: int = 72) -> np.ndarray:
    """Range per beam at world-frame headings i*360/n_beams. Deterministic."""
    x, y = pose[0], pose[1]
    if world.occupied(x, y):
        raise ValueError("pose inside an obstacle")
    return np.array([
        raycast(world, x, y, 2.0 * np.pi * i / n_beams, max_range)
        for i in range(n_beams)
    ])


def visible_free_cells(world: World, pose: tuple[float, float, float],
                       max_range: float = 12.0, n_beams: int = 72) -> set[tuple[int, int]]:
    """Free cells crossed by any lidar beam; drives the coverage metric."""
    x, y = pose[0], pose[1]
    step_len = world.resolution / 4.0
    cells: set[tuple[int, int]] = set()
    for i in range(n_beams):
        h = 2.0 * np.pi * i / n_beams
        r = raycast(world, x, y, h, max_range)
        n = int(r / step_len)
        if n == 0:
            continue
        ds = step_len * np.arange(n + 1)
        px = ((x + ds * np.cos(h)) / world.resolution).astype(int)
        py = ((y + ds * np.sin(h)) / world.resolution).astype(int)
        for cx, cy in zip(px, py):
            if 0 <= cx < world.grid.shape[1] and 0 <= cy < world.grid.shape[0] \
                    and not world.grid[cy, cx]:
                cells.add((int(cx), int(cy)))
    return cells


def edit_world(world: World, region: tuple[float, float, float, float],
               occupied: bool) -> World:
    """Set a rectangular region (x0, y0, x1, y1 in meters) occupied or free.
    Returns the same world; the edit is visible to the next scan or step."""
    x0, y0, x1, y1 = region
    if x0 > x1 or y0 > y1:
        raise ValueError("region must have x0 <= x1 and y0 <= y1")
    if x0 < 0 or y0 < 0 or x1 > world.width or y1 > world.height:
        raise ValueError("region outside world bounds")
    ix0, iy0 = world.cell(x0, y0)
    ix1 = min(int(np.ceil(x1 / world.resolution)), world.grid.shape[1])
    iy1 = min(int(np.ceil(y1 / world.resolution)), world.grid.shape[0])
    world.grid[iy0:iy1, ix0:ix1] = occupied
    # never free the border
    world.grid[0, :] = True
    world.grid[-1, :] = True
    world.grid[:, 0] = True
    world.grid[:, -1] = True
    return world


# ---------------------------------------------------------------------------
# world file format: key-value header, then a "map" line, then rows of '#'/'.'
# The first map row is the top of the world (largest y).


def parse_world(text: str) -> World:
    resolution = None
    spawns: dict[str, tuple[float, float]] = {}
    rows: list[str] = []
    in_map = False
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not in_map:
            stripped = line.strip()
            if not stripped or stripped.startswith("//"):
                continue
            parts = stripped.split()
            if parts[0] == "resolution":
                try:
                    resolution = float(parts[1])
                except (IndexError, ValueError):
                    raise WorldParseError("resolution needs one numeric value", lineno)
            elif parts[0] == "spawn":
                try:
                    spawns[parts[1]] = (float(parts[2]), float(parts[3]))
                except (IndexError, ValueError):
                    raise WorldParseError("spawn needs: name x y", lineno)
            elif parts[0] == "map":
                in_map = True
            else:
                raise WorldParseError(f"unknown directive {parts[0]!r}", lineno)
        else:
            if not line.strip():
                continue
            if width is None:
                width = len(line)
            elif len(line) != width:
                raise WorldParseError(
                    f"ragged map row, expected width {width}", lineno, len(line))
            for col, ch in enumerate(line):
                if ch not in (OCCUPIED, FREE):
                    raise WorldParseError(f"invalid cell {ch!r}", lineno, col + 1)
            rows.append(line)
    if resolution is None:
        raise WorldParseError("missing resolution directive", 1)
    if not rows:
        raise WorldParseError("missing map section", 1)
    grid = np.array([[ch == OCCUPIED for ch in row] for row in reversed(rows)])
    return World(grid, resolution, spawns)


def format_world(world: World) -> str:
    lines = [f"resolution {world.resolution:g}"]
    for name in sorted(world.spawns):
        x, y = world.spawns[name]
        lines.append(f"spawn {name} {x:g} {y:g}")
    lines.append("map")
    for row in reversed(world.grid):
        lines.append("".join(OCCUPIED if c else FREE for c in row))
    return "\n".join(lines) + "\n"


def load_world(path) -> World:
    from . import worlds
    name = str(path)
    if name in worlds.BUILTIN:
        return worlds.builtin(name)
    with open(path) as fh:
        return parse_world(fh.read())


def save_world(world: World, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_world(world))
