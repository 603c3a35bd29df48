"""Panoramic observations: synthesis from the grid world and SSIM matching.

Panoramas are W x H grayscale images in [0,1], one column per surround
bearing, always aligned to world-frame north (column 0 = heading 0) so the
capture heading never affects matching. Column content is a cheap cylindrical
render: wall slab height falls with raycast depth and its shade carries a
per-cell texture, which makes distinct places distinguishable and nearby
poses similar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from .simulator import World, raycast

PANORAMA_WIDTH = 360
PANORAMA_HEIGHT = 32

SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _texture(ix: np.ndarray, iy: np.ndarray, tile: int = 1) -> np.ndarray:
    """Deterministic texture in [0,1], hashed per tile of `tile` grid cells."""
    h = ((ix.astype(np.int64) // tile) * 73856093) \
        ^ ((iy.astype(np.int64) // tile) * 19349663)
    return ((h % 1024) / 1023.0).astype(float)


def render_panorama(world: World, pose: tuple[float, float, float],
                    max_range: float = 12.0,
                    width: int = PANORAMA_WIDTH,
                    height: int = PANORAMA_HEIGHT) -> np.ndarray:
    """Deterministic surround view at the pose. Raises if inside an obstacle.

    A cheap cylindrical render: per column, the wall slab height and shade
    fall with raycast depth and carry the hit cell's texture; the floor rows
    are ground-cast (each row samples the ground cell at its projected
    distance) so nearby poses look alike while distant places do not.
    """
    x, y = pose[0], pose[1]
    if world.occupied(x, y):
        raise ValueError("pose inside an obstacle")
    rows = np.arange(height)[:, None]
    depths = np.empty(width)
    headings = 2.0 * np.pi * np.arange(width) / width
    hit_ix = np.empty(width, dtype=np.int64)
    hit_iy = np.empty(width, dtype=np.int64)
    for c in range(width):
        d = raycast(world, x, y, float(headings[c]), max_range)
        depths[c] = d
        hx = x + (d + world.resolution / 2.0) * np.cos(headings[c])
        hy = y + (d + world.resolution / 2.0) * np.sin(headings[c])
        hit_ix[c] = min(max(int(hx / world.resolution), 0), world.grid.shape[1] - 1)
        hit_iy[c] = min(max(int(hy / world.resolution), 0), world.grid.shape[0] - 1)
    tex = _texture(hit_ix, hit_iy, max(1, int(round(0.5 / world.resolution))))

    # wall slab: ~2 m apparent wall, shaded darker with distance
    half = np.clip(height / np.maximum(depths, 0.25), 1.0, height / 2.0)
    top = height / 2.0 + half
    bot = height / 2.0 - half
    wall_shade = (0.30 + 0.55 * tex) * (1.0 - 0.4 * depths / max_range)
    band = 0.06 * np.sin(rows * (2.0 * np.pi / 5.0) + tex[None, :] * 6.0)
    wall = np.clip(wall_shade[None, :] + band, 0.02, 1.0)

    # ground casting for rows below the wall: row r sees the floor at
    # distance proportional to 1/(height/2 - r)
    below = np.maximum(height / 2.0 - rows, 1e-6)
    ground_d = np.minimum(0.5 * height / below, max_range)
    gx = np.clip(((x + ground_d * np.cos(headings)[None, :]) / world.resolution)
                 .astype(np.int64), 0, world.grid.shape[1] - 1)
    gy = np.clip(((y + ground_d * np.sin(headings)[None, :]) / world.resolution)
                 .astype(np.int64), 0, world.grid.shape[0] - 1)
    # faint 1 m floor tiles: nearby walls dominate the view, so places with
    # only distant walls stay visually aliased (like a plain concrete floor)
    tile = max(1, int(round(1.0 / world.resolution)))
    floor = 0.62 + 0.12 * _texture(gx.ravel(), gy.ravel(), tile).reshape(gx.shape)

    sky = 0.06 + 0.12 * tex[None, :] * np.ones_like(rows)
    img = np.where(rows >= top[None, :], sky,
                   np.where(rows < bot[None, :], floor, wall))
    return np.clip(img, 0.0, 1.0)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity with uniform 8x8 windows and the standard
    stabilisers C1=(0.01)^2, C2=(0.03)^2 on unit dynamic range. Windows wrap
    horizontally because column 0 adjoins the last column."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"panorama dimensions differ: {a.shape} vs {b.shape}")

    def win_mean(img: np.ndarray) -> np.ndarray:
        out = uniform_filter1d(img, SSIM_WINDOW, axis=1, mode="wrap")
        return uniform_filter1d(out, SSIM_WINDOW, axis=0, mode="reflect")

    mu_a = win_mean(a)
    mu_b = win_mean(b)
    var_a = win_mean(a * a) - mu_a ** 2
    var_b = win_mean(b * b) - mu_b ** 2
    cov = win_mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    m = SSIM_WINDOW // 2
    valid = (num / den)[m:-m or None, :]
    return float(valid.mean())


@dataclass
class ObservationStore:
    """Append-only table observation_id -> panorama. Ids are dense and never
    recycled."""

    panoramas: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.panoramas)

    def add(self, panorama: np.ndarray) -> int:
        if self.panoramas and panorama.shape != self.panoramas[0].shape:
            raise ValueError("panorama dimensions fixed per run")
        self.panoramas.append(np.asarray(panorama, dtype=float))
        return len(self.panoramas) - 1

    def get(self, observation_id: int) -> np.ndarray:
        return self.panoramas[observation_id]

    def score_all(self, panorama: np.ndarray) -> np.ndarray:
        return np.array([ssim(panorama, p) for p in self.panoramas])


@dataclass
class MatchResult:
    observation_id: int | None
    score: float

    @property
    def novel(self) -> bool:
        return self.observation_id is None


def match_observation(panorama: np.ndarray, store: ObservationStore,
                      threshold: float) -> MatchResult:
    """Best stored observation by SSIM, or novel if nothing reaches the
    threshold. Ties break toward the lowest id."""
    if len(store) == 0:
        return MatchResult(None, -1.0)
    scores = store.score_all(panorama)
    best = int(np.argmax(scores))  # argmax takes the first of equal scores
    if scores[best] >= threshold:
        return MatchResult(best, float(scores[best]))
    return MatchResult(None, float(scores[best]))


def observation_evidence(scores: np.ndarray, temperature: float = 0.1,
                         hard: bool = False) -> np.ndarray:
    """Turn SSIM scores against the store into a non-negative evidence vector
    over observation ids. Probabilistic mode softmaxes the scores; hard mode
    puts all mass on the argmax."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        return scores
    if hard:
        out = np.zeros_like(scores)
        out[int(np.argmax(scores))] = 1.0
        return out
    z = (scores - scores.max()) / max(temperature, 1e-9)
    e = np.exp(z)
    return e / e.sum()


def save_pgm(panorama: np.ndarray, path) -> None:
    """Dump a panorama as a binary portable graymap for debugging."""
    img = np.clip(np.asarray(panorama) * 255.0, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img[::-1].tobytes())


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = (int(v) for v in parts[1].split())
    img = np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)
    return img[::-1].astype(float) / 255.0
