"""Built-in world layouts.

Sizes ladder from a 36 m2 mini warehouse up to a 280 m2 warehouse and a
175 m2 house, plus small purpose-built rooms for the drift and obstacle
demos. All interiors are quoted before subtracting shelving/walls.
"""

from __future__ import annotations

import numpy as np

from .simulator import World

_RES = 0.25


def _shell(width_m: float, height_m: float, res: float = _RES) -> np.ndarray:
    """Empty room of the given interior size with a one-cell occupied border."""
    nx = int(round(width_m / res)) + 2
    ny = int(round(height_m / res)) + 2
    grid = np.zeros((ny, nx), dtype=bool)
    grid[0, :] = grid[-1, :] = True
    grid[:, 0] = grid[:, -1] = True
    return grid


def _fill(grid: np.ndarray, x0: float, y0: float, x1: float, y1: float,
          occupied: bool = True, res: float = _RES) -> None:
    ix0, iy0 = int(round(x0 / res)), int(round(y0 / res))
    ix1, iy1 = int(round(x1 / res)), int(round(y1 / res))
    grid[iy0:iy1, ix0:ix1] = occupied


def _mini_warehouse() -> World:
    # 6 x 6 m interior (36 m2) with four shelving blocks.
    g = _shell(6.0, 6.0)
    _fill(g, 1.5, 4.5, 2.5, 5.25)
    _fill(g, 4.0, 4.5, 5.0, 5.25)
    _fill(g, 2.75, 2.5, 3.5, 3.25)
    _fill(g, 4.25, 1.5, 5.0, 2.25)
    return World(g, _RES, {"start": (0.9, 0.9), "corner": (5.5, 0.9)})


def _small_warehouse() -> World:
    # 10 x 8 m interior (80 m2), two shelf aisles.
    g = _shell(10.0, 8.0)
    _fill(g, 2.0, 2.0, 8.0, 2.75)
    _fill(g, 2.0, 5.25, 8.0, 6.0)
    _fill(g, 4.5, 3.75, 5.5, 4.25)
    return World(g, _RES, {"start": (1.0, 1.0), "mid": (5.0, 4.75)})


def _large_warehouse() -> World:
    # 20 x 14 m interior (280 m2), three long shelving rows with gaps.
    g = _shell(20.0, 14.0)
    for y in (3.0, 7.0, 11.0):
        _fill(g, 3.0, y, 9.0, y + 0.75)
        _fill(g, 11.0, y, 17.0, y + 0.75)
    _fill(g, 9.75, 12.5, 10.75, 13.5)
    _fill(g, 1.5, 5.0, 2.25, 6.0)
    return World(g, _RES, {"start": (1.2, 1.2), "far": (18.5, 12.5)})


def _house() -> World:
    # 14 x 12.5 m interior (175 m2); doorless openings between rooms.
    g = _shell(14.0, 12.5)
    # vertical wall with two openings
    _fill(g, 6.0, 0.25, 6.5, 3.5)
    _fill(g, 6.0, 5.5, 6.5, 9.0)
    _fill(g, 6.0, 11.0, 6.5, 12.25)
    # horizontal wall left wing
    _fill(g, 0.25, 6.0, 2.5, 6.5)
    _fill(g, 4.5, 6.0, 6.0, 6.5)
    # horizontal wall right wing
    _fill(g, 6.5, 8.0, 10.0, 8.5)
    _fill(g, 12.0, 8.0, 13.75, 8.5)
    # furniture-ish blocks
    _fill(g, 2.0, 9.5, 3.0, 10.5)
    _fill(g, 9.0, 2.0, 10.5, 3.0)
    return World(g, _RES, {"start": (1.0, 1.0), "kitchen": (12.0, 2.0)})


def _box_room() -> World:
    # 5 x 5 m room (25 m2). The movable box is placed at runtime.
    g = _shell(5.0, 5.0)
    return World(g, _RES, {"start": (1.0, 2.75), "center": (2.75, 2.75)})


def _corridor() -> World:
    # 16 x 2 m corridor; textured side walls make positions distinguishable.
    g = _shell(16.0, 2.0)
    return World(g, _RES, {"start": (1.0, 1.25), "east": (15.0, 1.25)})


def _hall() -> World:
    # 16 x 6 m hall: walls near enough to stay distinctive, room for the
    # position belief to spread sideways under odometry noise.
    g = _shell(16.0, 6.0)
    return World(g, _RES, {"start": (1.0, 3.25), "east": (15.0, 3.25)})


def _open_arena() -> World:
    # 20 x 20 m empty arena: far walls make nearby poses visually aliased.
    g = _shell(20.0, 20.0)
    return World(g, _RES, {"start": (10.0, 10.0)})


BUILTIN = {
    "mini_warehouse": _mini_warehouse,
    "small_warehouse": _small_warehouse,
    "large_warehouse": _large_warehouse,
    "house": _house,
    "box_room": _box_room,
    "corridor": _corridor,
    "hall": _hall,
    "open_arena": _open_arena,
}


def builtin(name: str) -> World:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise KeyError(f"unknown built-in world {name!r}; "
                       f"options: {', '.join(sorted(BUILTIN))}") from None
