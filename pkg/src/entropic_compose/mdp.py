"""Tabular MDPs with vector-valued reward features, and the benchmark tasks.

A task family shares one transition structure and exposes its rewards as a
feature vector phi(s, a, s') in R^d; a concrete task is the scalar reward
phi . w for convex weights w. All builders are pure and deterministic:
building the same spec twice yields bit-identical arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-12

# Diagonal moves as (dcol, drow), in a fixed order.
DIAGONAL_MOVES = ((1, 1), (-1, 1), (1, -1), (-1, -1))
DIAGONAL_NAMES = ("NE", "NW", "SE", "SW")

# 9 cell displacements for the velocity-controlled point mass, row-major.
POINTMASS_MOVES = tuple((dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1))

SUITE_NAMES = ("LR", "LU", "T")

# Shared defaults for the built-in benchmark tasks, chosen so the
# corner-seeking vs. reward-sitting trade-offs the suites are built around
# stay well separated numerically.
SUITE_GAMMA = 0.95
POINTMASS_GAMMA = 0.95


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP with dense transition tensor and per-transition features.

    transitions[s, a, s'] is the probability of landing in s'; features
    [s, a, s', :] is the reward-feature vector phi collected on that
    transition. Arrays are made read-only so instances can be shared freely.
    """

    transitions: np.ndarray  # (S, A, S)
    features: np.ndarray     # (S, A, S, d)
    gamma: float
    grid_shape: tuple[int, int] | None = None   # (width, height) if grid-like
    moves: tuple[tuple[int, int], ...] | None = None  # action displacements

    def __post_init__(self):
        p = np.asarray(self.transitions, dtype=np.float64)
        f = np.asarray(self.features, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transitions must be (S, A, S), got {p.shape}")
        if f.ndim != 4 or f.shape[:3] != p.shape:
            raise ValueError(
                f"features must be (S, A, S, d) matching transitions, got {f.shape}"
            )
        object.__setattr__(self, "transitions", _readonly(p))
        object.__setattr__(self, "features", _readonly(f))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[3]

    def expected_features(self) -> np.ndarray:
        """E_{s'}[phi(s, a, s')] as an (S, A, d) array."""
        return np.einsum("sat,satd->sad", self.transitions, self.features)

    def rewards(self, w: "TaskWeights | np.ndarray") -> np.ndarray:
        """Expected scalar reward r_w(s, a) = E_{s'}[phi(s, a, s') . w]."""
        wv = w.w if isinstance(w, TaskWeights) else np.asarray(w, dtype=np.float64)
        return self.expected_features() @ wv


@dataclass(frozen=True)
class TaskWeights:
    """Convex task weights over the reward features."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w < 0):
            raise ValueError(f"weights must be nonnegative, got {w}")
        if abs(w.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"weights must sum to 1, got sum {w.sum()!r}")
        object.__setattr__(self, "w", _readonly(w))

    @classmethod
    def from_b(cls, b: float) -> "TaskWeights":
        """Two-task shorthand: b in [0, 1] maps to (b, 1 - b)."""
        b = float(b)
        if not 0.0 <= b <= 1.0:
            raise ValueError(f"b must lie in [0, 1], got {b}")
        return cls(np.array([b, 1.0 - b]))

    def __len__(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class GridSpec:
    """Layout of a rectangular diagonal-move grid task.

    reward_cells entries are (col, row, feature_index, value); the feature
    vector of a cell is the sum of its entries. boundary_mode 'stay' turns
    any move that would leave the grid into a self-transition; 'clamp' clips
    each coordinate independently.
    """

    width: int
    height: int
    boundary_mode: str = "clamp"
    reward_cells: tuple[tuple[int, int, int, float], ...] = field(default=())

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.boundary_mode not in ("stay", "clamp"):
            raise ValueError(f"unknown boundary_mode {self.boundary_mode!r}")
        cells = tuple(
            (int(c), int(r), int(d), float(v)) for c, r, d, v in self.reward_cells
        )
        for col, row, dim, value in cells:
            if not (0 <= col < self.width and 0 <= row < self.height):
                raise ValueError(f"reward cell ({col}, {row}) outside grid")
            if dim < 0:
                raise ValueError(f"negative feature index {dim}")
            if not np.isfinite(value):
                raise ValueError(f"non-finite reward value at ({col}, {row})")
        object.__setattr__(self, "reward_cells", cells)


def state_index(col: int, row: int, width: int) -> int:
    return row * width + col


def state_coords(s: int, width: int) -> tuple[int, int]:
    return s % width, s // width


def build_grid_world(spec: GridSpec, feature_dim: int, gamma: float) -> TabularMdp:
    """Deterministic diagonal-move grid world.

    Four actions (NE, NW, SE, SW). The feature vector collected on a
    transition is that of the arrival cell, so a self-transition at the
    boundary re-collects the current cell's features every step.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if feature_dim < 1:
        raise ValueError("feature_dim must be positive")
    for _, _, dim, _ in spec.reward_cells:
        if dim >= feature_dim:
            raise ValueError(f"feature index {dim} outside dimension {feature_dim}")

    w, h = spec.width, spec.height
    num_states = w * h
    num_actions = len(DIAGONAL_MOVES)

    cell_features = np.zeros((num_states, feature_dim))
    for col, row, dim, value in spec.reward_cells:
        cell_features[state_index(col, row, w), dim] += value

    transitions = np.zeros((num_states, num_actions, num_states))
    features = np.zeros((num_states, num_actions, num_states, feature_dim))
    for s in range(num_states):
        col, row = state_coords(s, w)
        for a, (dc, dr) in enumerate(DIAGONAL_MOVES):
            tc, tr = col + dc, row + dr
            if spec.boundary_mode == "stay":
                if not (0 <= tc < w and 0 <= tr < h):
                    tc, tr = col, row
            else:
                tc = min(max(tc, 0), w - 1)
                tr = min(max(tr, 0), h - 1)
            t = state_index(tc, tr, w)
            transitions[s, a, t] = 1.0
            features[s, a, t] = cell_features[t]

    return TabularMdp(
        transitions=transitions,
        features=features,
        gamma=gamma,
        grid_shape=(w, h),
        moves=DIAGONAL_MOVES,
    )


def _column_cells(col: int, height: int, dim: int, value: float = 1.0):
    return tuple((col, r, dim, value) for r in range(height))


def _row_cells(row: int, width: int, dim: int, value: float = 1.0):
    return tuple((c, row, dim, value) for c in range(width))


def build_task_suite(name: str, gamma: float = SUITE_GAMMA) -> tuple[TabularMdp, str]:
    """Build one of the 8x8 two-feature benchmark suites: LR, LU or T.

    LR: feature 0 rewards every column-0 cell, feature 1 every column-7
    cell (incompatible sub-goals). LU: feature 0 on column 0, feature 1 on
    row 7, overlapping at the top-left corner (compatible sub-goals). T:
    non-overlapping +1 cells at (0, 1) and (1, 0) plus a shared 0.75 cell
    at (7, 7); the blend of both tasks is best served by the shared corner,
    which neither base policy visits.

    LR and LU use clamped boundaries. T uses 'stay' boundaries, whose
    self-transitions let each base policy re-collect its own corner reward
    every step; clamping would let high-discount base policies abandon
    their corners, collapsing the suite's intended structure.
    """
    if name == "LR":
        spec = GridSpec(
            width=8,
            height=8,
            boundary_mode="clamp",
            reward_cells=_column_cells(0, 8, 0) + _column_cells(7, 8, 1),
        )
        desc = "left-right: feature 0 on column 0, feature 1 on column 7"
    elif name == "LU":
        spec = GridSpec(
            width=8,
            height=8,
            boundary_mode="clamp",
            reward_cells=_column_cells(0, 8, 0) + _row_cells(7, 8, 1),
        )
        desc = "left-up: feature 0 on column 0, feature 1 on row 7"
    elif name == "T":
        spec = GridSpec(
            width=8,
            height=8,
            boundary_mode="stay",
            reward_cells=(
                (0, 1, 0, 1.0),
                (1, 0, 1, 1.0),
                (7, 7, 0, 0.75),
                (7, 7, 1, 0.75),
            ),
        )
        desc = "tricky: +1 corners at (0,1)/(1,0), shared 0.75 at (7,7)"
    else:
        raise ValueError(f"unknown task suite {name!r}; expected one of {SUITE_NAMES}")
    return build_grid_world(spec, feature_dim=2, gamma=gamma), desc


# Point-mass reward regions as (x_lo, x_hi, y_lo, y_hi, feature values).
POINTMASS_REGIONS = (
    (-1.0, -0.6, -0.2, 0.2, (1.0, 0.0)),    # green, left of center
    (-0.2, 0.2, -1.0, -0.6, (0.0, 1.0)),    # red, below center
    (0.6, 1.0, 0.6, 1.0, (0.75, 0.75)),     # yellow, top-right
)


def pointmass_cell_center(col: int, row: int, resolution: int) -> tuple[float, float]:
    step = 2.0 / resolution
    return -1.0 + (col + 0.5) * step, -1.0 + (row + 0.5) * step


def pointmass_region_features(x: float, y: float) -> np.ndarray:
    phi = np.zeros(2)
    for x_lo, x_hi, y_lo, y_hi, values in POINTMASS_REGIONS:
        if x_lo <= x <= x_hi and y_lo <= y <= y_hi:
            phi += values
    return phi


def build_pointmass_grid(resolution: int, gamma: float = POINTMASS_GAMMA) -> TabularMdp:
    """Discretized 2-D point mass on the arena [-1, 1]^2.

    Nine actions move the mass by one cell in each direction (including
    staying put); boundaries clamp. Region membership is decided by the
    cell center.
    """
    if resolution < 5:
        raise ValueError(f"resolution must be at least 5, got {resolution}")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")

    n = resolution
    num_states = n * n
    num_actions = len(POINTMASS_MOVES)

    cell_features = np.zeros((num_states, 2))
    for s in range(num_states):
        col, row = state_coords(s, n)
        cell_features[s] = pointmass_region_features(*pointmass_cell_center(col, row, n))

    transitions = np.zeros((num_states, num_actions, num_states))
    features = np.zeros((num_states, num_actions, num_states, 2))
    for s in range(num_states):
        col, row = state_coords(s, n)
        for a, (dx, dy) in enumerate(POINTMASS_MOVES):
            tc = min(max(col + dx, 0), n - 1)
            tr = min(max(row + dy, 0), n - 1)
            t = state_index(tc, tr, n)
            transitions[s, a, t] = 1.0
            features[s, a, t] = cell_features[t]

    return TabularMdp(
        transitions=transitions,
        features=features,
        gamma=gamma,
        grid_shape=(n, n),
        moves=POINTMASS_MOVES,
    )


def validate(mdp: TabularMdp) -> list[str]:
    """Check the MDP invariants; returns a list of violations, never raises."""
    violations = []
    p, f = mdp.transitions, mdp.features
    if not 0.0 <= mdp.gamma < 1.0:
        violations.append(f"gamma {mdp.gamma} outside [0, 1)")
    if np.any(p < 0):
        for s, a in zip(*np.nonzero((p < 0).any(axis=2))):
            violations.append(f"negative transition probability at (s={s}, a={a})")
    row_sums = p.sum(axis=2)
    bad = np.abs(row_sums - 1.0) > PROB_TOL
    for s, a in zip(*np.nonzero(bad)):
        violations.append(
            f"transition row (s={s}, a={a}) sums to {row_sums[s, a]!r}, expected 1"
        )
    finite = np.isfinite(f).all(axis=3).all(axis=2)
    for s, a in zip(*np.nonzero(~finite)):
        violations.append(f"non-finite feature entry at (s={s}, a={a})")
    return violations


def grid_task_to_json(spec: GridSpec, gamma: float) -> str:
    """Serialize a grid task to the interchange JSON document."""
    doc = {
        "width": spec.width,
        "height": spec.height,
        "boundary": spec.boundary_mode,
        "gamma": gamma,
        "features": [
            {"col": c, "row": r, "dim": d, "value": v}
            for c, r, d, v in spec.reward_cells
        ],
    }
    return json.dumps(doc, sort_keys=True)


def grid_task_from_json(text: str) -> tuple[GridSpec, int, float]:
    """Parse the interchange JSON document; returns (spec, feature_dim, gamma).

    feature_dim is inferred as one past the largest feature index used
    (at least 1).
    """
    doc = json.loads(text)
    cells = tuple(
        (int(e["col"]), int(e["row"]), int(e["dim"]), float(e["value"]))
        for e in doc["features"]
    )
    spec = GridSpec(
        width=int(doc["width"]),
        height=int(doc["height"]),
        boundary_mode=str(doc["boundary"]),
        reward_cells=cells,
    )
    feature_dim = max((d for _, _, d, _ in cells), default=0) + 1
    return spec, feature_dim, float(doc["gamma"])
