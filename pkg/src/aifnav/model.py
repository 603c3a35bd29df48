"""Categorical generative model over states, positions, observations and actions.

The agent's world model is a set of Dirichlet pseudo-count tables:

* ``a_o`` : P(o|s), observation likelihood, shape (n_obs, n_states)
* ``a_p`` : P(p|s), position-bin likelihood, shape (n_bins, n_states)
* ``b_s`` : P(s'|s,a), state transitions, shape (n_states, n_states, n_actions)
* ``b_p`` : P(p'|p,a), position-bin transitions, shape (n_bins, n_bins, n_actions)

Categorical distributions are plain 1-D numpy arrays that sum to one;
pseudo-count tables are plain arrays clamped to ``COUNT_FLOOR``. Normalising
any column of a count table yields a categorical. All mutation happens under
exclusive access (single agent thread); the planner only reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import digamma

# Counts are clamped to [COUNT_FLOOR, COUNT_CAP]. The floor keeps every column
# normalizable under negative learning rates and doubles as the minimum
# plasticity of an entry; the cap stops multiplicative reinforcement from
# growing counts without bound on heavily traversed edges.
COUNT_FLOOR = 1e-3
COUNT_CAP = 1e6

# Pseudo-count given to a freshly hypothesised state's position bin, and the
# extra count added once the position is physically confirmed.
AP_NEW_COUNT = 1.0
AP_CONFIRM_COUNT = 10.0

_EPS = 1e-300


# ---------------------------------------------------------------------------
# categorical algebra


def normalize(counts: np.ndarray, column: int | None = None) -> np.ndarray:
    """Normalise a count vector (or one column of a count matrix) to a categorical."""
    counts = np.asarray(counts, dtype=float)
    vec = counts if column is None else counts[:, column]
    total = vec.sum()
    if total <= 0.0:
        raise ValueError("cannot normalize a non-positive count column")
    return vec / total


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats, with the 0*log(0) = 0 convention."""
    p = np.asarray(p, dtype=float)
    nz = p > 0.0
    return float(-(p[nz] * np.log(p[nz])).sum())


def kl_divergence(q: np.ndarray, p: np.ndarray) -> float:
    """KL(q || p) in nats. q and p must have equal dimension; 0*log(0) = 0."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise ValueError(f"dimension mismatch: {q.shape} vs {p.shape}")
    nz = q > 0.0
    return float((q[nz] * (np.log(q[nz]) - np.log(p[nz] + _EPS))).sum())


def is_categorical(p: np.ndarray, tol: float = 1e-9) -> bool:
    p = np.asarray(p, dtype=float)
    return p.ndim == 1 and p.size >= 1 and (p >= -tol).all() and abs(p.sum() - 1.0) <= tol


def clamp_counts(counts: np.ndarray) -> np.ndarray:
    """Clamp a count array into [COUNT_FLOOR, COUNT_CAP] in place."""
    np.clip(counts, COUNT_FLOOR, COUNT_CAP, out=counts)
    return counts


# ---------------------------------------------------------------------------
# actions


class ActionSpace:
    """Discrete motions: n_actions-1 headings evenly spanning 360 degrees plus
    one designated stay action at the last index (n_actions is odd)."""

    def __init__(self, n_actions: int = 13):
        if n_actions < 3 or n_actions % 2 == 0:
            raise ValueError("n_actions must be odd and >= 3")
        self.n_actions = n_actions
        self.n_headings = n_actions - 1
        self.stay = n_actions - 1
        self.headings = 2.0 * np.pi * np.arange(self.n_headings) / self.n_headings

    def heading(self, action: int) -> float:
        if action == self.stay:
            raise ValueError("stay action has no heading")
        return float(self.headings[action])

    def displacement(self, action: int, distance: float) -> np.ndarray:
        if action == self.stay:
            return np.zeros(2)
        h = self.headings[action]
        return distance * np.array([np.cos(h), np.sin(h)])

    def opposite(self, action: int) -> int:
        if action == self.stay:
            return action
        return (action + self.n_headings // 2) % self.n_headings

    def nearest(self, heading: float) -> int:
        """Heading action closest to the given angle (radians)."""
        diffs = np.angle(np.exp(1j * (self.headings - heading)))
        return int(np.argmin(np.abs(diffs)))


# ---------------------------------------------------------------------------
# position discretisation


class BinGrid:
    """Square position bins of side influence_radius/2 tiling the world bounds."""

    def __init__(self, bounds: tuple[float, float, float, float], bin_size: float):
        xmin, ymin, xmax, ymax = bounds
        if bin_size <= 0 or xmax <= xmin or ymax <= ymin:
            raise ValueError("invalid bin grid geometry")
        self.xmin, self.ymin = float(xmin), float(ymin)
        self.bin_size = float(bin_size)
        self.nx = max(1, int(np.ceil((xmax - xmin) / bin_size)))
        self.ny = max(1, int(np.ceil((ymax - ymin) / bin_size)))
        self.n_bins = self.nx * self.ny

    def index(self, x: float, y: float) -> int:
        ix = int(np.clip((x - self.xmin) / self.bin_size, 0, self.nx - 1))
        iy = int(np.clip((y - self.ymin) / self.bin_size, 0, self.ny - 1))
        return iy * self.nx + ix

    def center(self, b: int) -> np.ndarray:
        iy, ix = divmod(int(b), self.nx)
        return np.array([
            self.xmin + (ix + 0.5) * self.bin_size,
            self.ymin + (iy + 0.5) * self.bin_size,
        ])

    def centers(self) -> np.ndarray:
        """(n_bins, 2) array of bin centre coordinates."""
        ix = np.arange(self.nx)
        iy = np.arange(self.ny)
        gx, gy = np.meshgrid(ix, iy)
        return np.stack([
            self.xmin + (gx.ravel() + 0.5) * self.bin_size,
            self.ymin + (gy.ravel() + 0.5) * self.bin_size,
        ], axis=1)

    def shifted(self, b: int, dx: float, dy: float) -> int:
        c = self.center(b)
        return self.index(c[0] + dx, c[1] + dy)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class HyperParams:
    """Run-level knobs of the agent. All values must be positive and
    influence_radius must exceed agent_radius."""

    n_actions: int = 13
    agent_radius: float = 0.2
    influence_radius: float = 1.0
    max_hypothesis_chain: int = 8
    gamma: float = 4.0                  # softmax precision over policies
    epsilon_inductive: float = 0.001    # ln(eps) scales backward goal propagation
    lost_zscore_threshold: float = 4.0
    ssim_match_threshold: float = 0.75
    mcts_depth: int = 10
    mcts_simulations: int = 30
    policy_length: int = 1
    obstacle_padding: float = 0.1       # extra clearance on top of agent_radius
    state_complexity_cost: float = 1.0  # per-state model cost in the delta-F gate
    inductive_depth: int = 20           # backward propagation horizon for goals
    evidence_temperature: float = 0.1   # softmax temperature over match scores
    belief_support: int = 8             # planner belief truncation
    lidar_range: float = 12.0
    lidar_beams: int = 72
    probabilistic_obs_evidence: bool = True

    def validate(self) -> "HyperParams":
        numeric = {
            "n_actions": self.n_actions, "agent_radius": self.agent_radius,
            "influence_radius": self.influence_radius,
            "max_hypothesis_chain": self.max_hypothesis_chain, "gamma": self.gamma,
            "lost_zscore_threshold": self.lost_zscore_threshold,
            "mcts_depth": self.mcts_depth, "mcts_simulations": self.mcts_simulations,
            "policy_length": self.policy_length, "inductive_depth": self.inductive_depth,
            "lidar_range": self.lidar_range, "lidar_beams": self.lidar_beams,
        }
        for name, value in numeric.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not (0.0 < self.epsilon_inductive < 1.0):
            raise ValueError("epsilon_inductive must lie in (0,1)")
        if not (0.0 <= self.ssim_match_threshold <= 1.0):
            raise ValueError("ssim_match_threshold must lie in [0,1]")
        if self.influence_radius <= self.agent_radius:
            raise ValueError("influence_radius must exceed agent_radius")
        return self

    @property
    def bin_size(self) -> float:
        return self.influence_radius / 2.0


@dataclass
class Preferences:
    """Log-preferences over observations, position bins and states, a scalar
    log-preference against collision, and the pragmatic weight that scales
    the utility terms. Zero vectors mean no preference."""

    c_o: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c_p: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c_s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c_c: float = -10.0
    pragmatic_weight: float = 1.0

    def ensure_dims(self, n_obs: int, n_bins: int, n_states: int) -> "Preferences":
        self.c_o = _grow(self.c_o, n_obs)
        self.c_p = _grow(self.c_p, n_bins)
        self.c_s = _grow(self.c_s, n_states)
        if self.pragmatic_weight < 0:
            raise ValueError("pragmatic_weight must be >= 0")
        return self

    def clear_goals(self) -> None:
        self.c_o[:] = 0.0
        self.c_p[:] = 0.0
        self.c_s[:] = 0.0


def _grow(vec: np.ndarray, n: int) -> np.ndarray:
    if vec.size > n:
        raise ValueError("preference vector larger than model dimension")
    if vec.size == n:
        return vec
    out = np.zeros(n)
    out[: vec.size] = vec
    return out


# ---------------------------------------------------------------------------
# the generative model


class GenerativeModel:
    """Mutable container for the four pseudo-count tables.

    States and observations are append-only: expanding a dimension never
    renumbers existing entries. ``version`` increments on every mutation so
    derived caches (normalised views, entropies, novelty) can be reused by the
    planner between model edits.
    """

    def __init__(self, actions: ActionSpace, bins: BinGrid):
        self.actions = actions
        self.bins = bins
        nb, na = bins.n_bins, actions.n_actions
        self.a_o = np.zeros((0, 0))
        self.a_p = np.zeros((nb, 0))
        self.b_s = np.zeros((0, 0, na))
        # position transitions are a sparse kinematic kernel over the fixed
        # floor: dense bin-by-bin storage would be quadratic in world size
        self.b_p_kernel: list[sparse.csr_matrix] = self._build_position_kernel()
        self.state_has_obs: list[bool] = []
        self.version = 0
        self._cache_version = -1
        self._cache: dict[str, np.ndarray] = {}

    # -- construction ------------------------------------------------------

    _KERNEL_PEAK = 4.0
    _KERNEL_SIDE = 0.5

    def _build_position_kernel(self) -> list[sparse.csr_matrix]:
        """Kinematic prior over bins: each action shifts mass by one influence
        radius along its heading with some spread onto neighbouring bins;
        motion out of bounds stays put. Column sums are constant, so the
        dense equivalent is kernel + floor everywhere."""
        bins = self.bins
        nb = bins.n_bins
        step = bins.bin_size * 2.0  # one influence radius
        side = bins.bin_size
        centers = bins.centers()
        cols = np.arange(nb)

        def shifted_rows(dx: float, dy: float) -> np.ndarray:
            ix = np.clip(((centers[:, 0] + dx - bins.xmin) / bins.bin_size)
                         .astype(int), 0, bins.nx - 1)
            iy = np.clip(((centers[:, 1] + dy - bins.ymin) / bins.bin_size)
                         .astype(int), 0, bins.ny - 1)
            return iy * bins.nx + ix

        kernels = []
        for a in range(self.actions.n_actions):
            if a == self.actions.stay:
                dx, dy = 0.0, 0.0
            else:
                disp = self.actions.displacement(a, step)
                dx, dy = float(disp[0]), float(disp[1])
            rows = [shifted_rows(dx, dy)]
            data = [np.full(nb, self._KERNEL_PEAK)]
            for ox, oy in ((side, 0), (-side, 0), (0, side), (0, -side)):
                rows.append(shifted_rows(dx + ox, dy + oy))
                data.append(np.full(nb, self._KERNEL_SIDE))
            kernels.append(sparse.csr_matrix(
                (np.concatenate(data),
                 (np.concatenate(rows), np.tile(cols, 5))), shape=(nb, nb)))
        return kernels

    @property
    def _b_p_col_total(self) -> float:
        return (self._KERNEL_PEAK + 4 * self._KERNEL_SIDE
                + self.bins.n_bins * COUNT_FLOOR)

    def b_p_dense(self) -> np.ndarray:
        """Dense position-transition counts (bins x bins x actions); only for
        inspection of small models."""
        nb, na = self.bins.n_bins, self.actions.n_actions
        out = np.full((nb, nb, na), COUNT_FLOOR)
        for a in range(na):
            out[:, :, a] += self.b_p_kernel[a].toarray()
        return out

    def predict_position(self, q_p: np.ndarray, action: int) -> np.ndarray:
        """One-step position prediction q_p' = P(p'|p,a) q_p, computed from
        the sparse kernel plus the uniform floor mass."""
        total = self._b_p_col_total
        out = (self.b_p_kernel[action] @ q_p + COUNT_FLOOR * q_p.sum()) / total
        s = out.sum()
        return out / s if s > 0 else out

    # -- dimensions ----------------------------------------------------------

    @property
    def n_states(self) -> int:
        return self.a_p.shape[1]

    @property
    def n_obs(self) -> int:
        return self.a_o.shape[0]

    @property
    def n_bins(self) -> int:
        return self.bins.n_bins

    def _touch(self) -> None:
        self.version += 1

    # -- expansion -----------------------------------------------------------

    def expand_state_dim(self, bin_index: int) -> int:
        """Append one state whose position likelihood concentrates on
        ``bin_index``. Its observation column is uniform (maximum entropy) and
        its transitions sit at the count floor except certain self-transition
        under stay. Returns the new state id."""
        n, nb, na = self.n_states, self.n_bins, self.actions.n_actions
        if not (0 <= bin_index < nb):
            raise IndexError(f"bin {bin_index} out of range")

        a_p_col = np.full((nb, 1), COUNT_FLOOR)
        a_p_col[bin_index, 0] += AP_NEW_COUNT
        self.a_p = np.hstack([self.a_p, a_p_col])

        self.a_o = np.hstack([self.a_o, np.ones((self.n_obs, 1))])

        b_s = np.full((n + 1, n + 1, na), COUNT_FLOOR)
        b_s[:n, :n, :] = self.b_s
        b_s[n, n, self.actions.stay] = 1.0
        self.b_s = b_s

        self.state_has_obs.append(False)
        self._touch()
        return n

    def expand_observation_dim(self, state_id: int, count: float = 1.0) -> int:
        """Append one observation row at floor counts except for the state it
        is attached to. Returns the new observation id."""
        if not (0 <= state_id < self.n_states):
            raise IndexError(f"state {state_id} out of range")
        row = np.full((1, self.n_states), COUNT_FLOOR)
        row[0, state_id] = count
        self.a_o = np.vstack([self.a_o, row])
        self.state_has_obs[state_id] = True
        self._touch()
        return self.n_obs - 1

    def reinforce_observation(self, observation_id: int, state_id: int, rate: float = 1.0) -> None:
        if not (0 <= observation_id < self.n_obs and 0 <= state_id < self.n_states):
            raise IndexError("observation or state id out of range")
        self.a_o[observation_id, state_id] += rate
        self.state_has_obs[state_id] = True
        self._touch()

    def confirm_position(self, state_id: int, bin_index: int, count: float = AP_CONFIRM_COUNT) -> None:
        """Reinforce a state's position likelihood after physically arriving there."""
        self.a_p[bin_index, state_id] += count
        self._touch()

    # -- normalised views ----------------------------------------------------

    def _materialise_cache(self) -> dict[str, np.ndarray]:
        if self._cache_version == self.version:
            return self._cache
        a_o = self.a_o / np.maximum(self.a_o.sum(axis=0, keepdims=True), _EPS)
        if self.n_obs > 0:
            unobserved = ~np.asarray(self.state_has_obs, dtype=bool)
            a_o[:, unobserved] = 1.0 / self.n_obs
        a_p = self.a_p / np.maximum(self.a_p.sum(axis=0, keepdims=True), _EPS)
        b_s = self.b_s / np.maximum(self.b_s.sum(axis=0, keepdims=True), _EPS)
        with np.errstate(divide="ignore", invalid="ignore"):
            h_o = -np.sum(np.where(a_o > 0, a_o * np.log(a_o + _EPS), 0.0), axis=0)
            h_p = -np.sum(np.where(a_p > 0, a_p * np.log(a_p + _EPS), 0.0), axis=0)
        self._cache = {
            "a_o": a_o, "a_p": a_p, "b_s": b_s,
            # transposed/contiguous layouts keep the planner's per-state
            # reads streaming instead of striding across whole tensors
            "a_o_rows": np.ascontiguousarray(a_o.T),
            "a_p_rows": np.ascontiguousarray(a_p.T),
            "b_cols_norm": np.ascontiguousarray(b_s.transpose(2, 1, 0)),
            "b_cols_counts": np.ascontiguousarray(self.b_s.transpose(2, 1, 0)),
            "h_a_o": h_o, "h_a_p": h_p,
            "novelty": self._position_novelty(),
        }
        self._cache_version = self.version
        return self._cache

    def a_o_norm(self) -> np.ndarray:
        """P(o|s); columns of states never yet observed are uniform."""
        return self._materialise_cache()["a_o"]

    def a_p_norm(self) -> np.ndarray:
        return self._materialise_cache()["a_p"]

    def likelihood_rows(self, which: str) -> np.ndarray:
        """Per-state likelihood rows: (n_states, n_obs) or (n_states, n_bins)."""
        return self._materialise_cache()["a_o_rows" if which == "obs" else "a_p_rows"]

    def b_s_norm(self) -> np.ndarray:
        return self._materialise_cache()["b_s"]

    def b_s_outgoing(self, normalised: bool = True) -> np.ndarray:
        """(action, source, target) view of the transitions, contiguous per
        (action, source) row."""
        key = "b_cols_norm" if normalised else "b_cols_counts"
        return self._materialise_cache()[key]

    def b_p_norm(self) -> np.ndarray:
        """Dense normalised position transitions; only for small models."""
        b_p = self.b_p_dense()
        return b_p / b_p.sum(axis=0, keepdims=True)

    def column_entropies(self, which: str) -> np.ndarray:
        """Per-state entropy of the a_o ('obs') or a_p ('pos') columns."""
        return self._materialise_cache()["h_a_o" if which == "obs" else "h_a_p"]

    def _position_novelty(self) -> np.ndarray:
        """Expected Dirichlet information gain of confirming each state's
        position: KL(Dir(alpha + e_b) || Dir(alpha)) at the column's argmax
        bin b. Closed form: ln S - ln a_b + psi(a_b + 1) - psi(S + 1)."""
        if self.n_states == 0:
            return np.zeros(0)
        alpha = self.a_p
        totals = alpha.sum(axis=0)
        peak = alpha[np.argmax(alpha, axis=0), np.arange(self.n_states)]
        return (np.log(totals) - np.log(peak)
                + digamma(peak + 1.0) - digamma(totals + 1.0))

    def position_novelty(self) -> np.ndarray:
        return self._materialise_cache()["novelty"]

    def state_bin(self, state_id: int) -> int:
        return int(np.argmax(self.a_p[:, state_id]))

    # -- persistence ---------------------------------------------------------

    SCHEMA_VERSION = 1

    def to_arrays(self) -> dict[str, np.ndarray]:
        meta = {
            "schema": self.SCHEMA_VERSION,
            "n_actions": self.actions.n_actions,
            "bounds": [self.bins.xmin, self.bins.ymin,
                       self.bins.xmin + self.bins.nx * self.bins.bin_size,
                       self.bins.ymin + self.bins.ny * self.bins.bin_size],
            "bin_size": self.bins.bin_size,
        }
        return {
            "model_meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
            "a_o": self.a_o, "a_p": self.a_p, "b_s": self.b_s,
            "state_has_obs": np.asarray(self.state_has_obs, dtype=bool),
        }

    @classmethod
    def from_arrays(cls, data) -> "GenerativeModel":
        meta = json.loads(bytes(np.asarray(data["model_meta"], dtype=np.uint8)).decode())
        if meta["schema"] != cls.SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema {meta['schema']}")
        model = cls(ActionSpace(meta["n_actions"]),
                    BinGrid(tuple(meta["bounds"]), meta["bin_size"]))
        model.a_o = np.array(data["a_o"], dtype=float)
        model.a_p = np.array(data["a_p"], dtype=float)
        model.b_s = np.array(data["b_s"], dtype=float)
        model.state_has_obs = [bool(v) for v in np.asarray(data["state_has_obs"])]
        model._touch()
        return model

    def check_invariants(self) -> None:
        """Raise if any count table violates the floor/normalisation contract."""
        for name, table in (("a_o", self.a_o), ("a_p", self.a_p),
                            ("b_s", self.b_s)):
            if table.size and table.min() < COUNT_FLOOR - 1e-12:
                raise AssertionError(f"{name} holds counts below the floor")
        if self.n_states:
            for a in range(self.actions.n_actions):
                cols = self.b_s[:, :, a].sum(axis=0)
                if (cols <= 0).any():
                    raise AssertionError("b_s has a non-normalizable slice")
        for k in self.b_p_kernel:
            if k.nnz and k.data.min() <= 0:
                raise AssertionError("b_p kernel holds non-positive counts")
