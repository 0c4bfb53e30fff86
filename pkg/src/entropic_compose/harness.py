"""Transfer-experiment harness.

Runs b-sweeps of the composition methods over the benchmark tasks,
computing the exact max-ent regret of each composed policy against the
direct-solve oracle, and writes the results as deterministic CSV.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .compose import (
    METHOD_CO,
    METHOD_CONDQ,
    METHOD_DC,
    METHOD_DC_CHEAP,
    METHOD_DC_CHEAP_GPI,
    METHOD_GPI,
    METHODS,
    ComposedPolicy,
    compose_co,
    compose_condq,
    compose_dc,
    compose_gpi,
    dc_cheap,
    dc_cheap_gpi,
    dc_fixed_point,
    state_divergence,
)
from .mdp import (
    TabularMdp,
    TaskWeights,
    build_pointmass_grid,
    build_task_suite,
    grid_task_from_json,
    build_grid_world,
    SUITE_NAMES,
)
from .solver import (
    SoftSolution,
    SolveConfig,
    compute_successor_features,
    evaluate_policy_maxent,
    soft_value_iteration,
)

CSV_HEADER = "task,method,b,regret,value_optimal,value_method,solver_iterations,wall_time_ms"

DEFAULT_B_GRID = tuple(round(0.1 * k, 1) for k in range(11))

POINTMASS_TASK = "pointmass"
POINTMASS_RESOLUTION = 15


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: the cross product of tasks, methods and b values.

    start_mode is 'uniform', 'center', or an explicit tuple of start
    states; regret is averaged over the start distribution. With
    record_timings=False (the default) wall_time_ms is written as 0 so
    that repeated runs produce byte-identical output.
    """

    tasks: tuple[str, ...]
    methods: tuple[str, ...]
    b_grid: tuple[float, ...] = DEFAULT_B_GRID
    config: SolveConfig = SolveConfig(alpha=0.1)
    start_mode: str | tuple[int, ...] = "uniform"
    output_path: str | None = None
    record_timings: bool = False
    gamma: float | None = None  # override the tasks' default discounts

    def __post_init__(self):
        if not self.b_grid:
            raise ValueError("b grid must be nonempty")
        for b in self.b_grid:
            if not 0.0 <= b <= 1.0:
                raise ValueError(f"b={b} outside [0, 1]")
        if not self.methods:
            raise ValueError("method list must be nonempty")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")


@dataclass(frozen=True)
class ResultRow:
    task: str
    method: str
    b: float
    regret: float
    value_optimal: float
    value_method: float
    solver_iterations: int
    wall_time_ms: float

    def sort_key(self):
        return (self.task, self.method, self.b)


def resolve_task(name_or_path: str, gamma: float | None = None) -> tuple[TabularMdp, str]:
    """Map a built-in task name (LR, LU, T, pointmass) or a JSON path to an MDP."""
    name = name_or_path
    if name in SUITE_NAMES:
        mdp, _ = (
            build_task_suite(name) if gamma is None else build_task_suite(name, gamma)
        )
        return mdp, name
    if name.lower() == POINTMASS_TASK:
        mdp = (
            build_pointmass_grid(POINTMASS_RESOLUTION)
            if gamma is None
            else build_pointmass_grid(POINTMASS_RESOLUTION, gamma)
        )
        return mdp, POINTMASS_TASK
    path = Path(name_or_path)
    if not path.exists():
        raise ValueError(
            f"unknown task {name_or_path!r}: not a built-in "
            f"({', '.join(SUITE_NAMES)}, {POINTMASS_TASK}) and no such file"
        )
    spec, dim, task_gamma = grid_task_from_json(path.read_text())
    mdp = build_grid_world(spec, dim, task_gamma if gamma is None else gamma)
    return mdp, path.stem


def start_states(mdp: TabularMdp, mode) -> np.ndarray:
    if isinstance(mode, str):
        if mode == "uniform":
            return np.arange(mdp.num_states)
        if mode == "center":
            if mdp.grid_shape is None:
                raise ValueError("center start requires a grid task")
            w, h = mdp.grid_shape
            return np.array([(h // 2) * w + (w // 2)])
        raise ValueError(f"unknown start mode {mode!r}")
    states = np.asarray(mode, dtype=int)
    if states.size == 0 or states.min() < 0 or states.max() >= mdp.num_states:
        raise ValueError("explicit start states out of range")
    return states


class MethodBuilder:
    """Builds composed policies for one task, caching the shared pieces.

    Base solutions, successor features and the b=1/2 correction are
    computed once per task; exact corrections are cached per b.
    """

    def __init__(self, mdp: TabularMdp, cfg: SolveConfig):
        if mdp.feature_dim != 2:
            raise ValueError("b-sweeps need a two-feature task")
        self.mdp = mdp
        self.cfg = cfg
        self._bases: list[SoftSolution] | None = None
        self._sfs = None
        self._corrections: dict[float, object] = {}
        self._c_half = None

    def _require_converged(self, sol, what: str):
        if not sol.converged:
            raise RuntimeError(
                f"{what} did not converge within {self.cfg.max_iterations} sweeps "
                f"(residual {sol.residual:.3e})"
            )
        return sol

    @property
    def bases(self) -> list[SoftSolution]:
        if self._bases is None:
            self._bases = [
                self._require_converged(
                    soft_value_iteration(self.mdp, TaskWeights.from_b(b), self.cfg),
                    f"base solve b={b}",
                )
                for b in (1.0, 0.0)
            ]
        return self._bases

    @property
    def successor_features(self):
        if self._sfs is None:
            self._sfs = [
                self._require_converged(
                    compute_successor_features(self.mdp, sol.policy, self.cfg),
                    "successor features",
                )
                for sol in self.bases
            ]
        return self._sfs

    def correction(self, b: float):
        if b not in self._corrections:
            si, sj = self.bases
            self._corrections[b] = self._require_converged(
                dc_fixed_point(self.mdp, si.policy, sj.policy, b, self.cfg),
                f"divergence correction b={b}",
            )
        return self._corrections[b]

    @property
    def c_half(self):
        if self._c_half is None:
            self._c_half = self.correction(0.5)
        return self._c_half

    def build(self, method: str, b: float) -> ComposedPolicy:
        si, sj = self.bases
        w = TaskWeights.from_b(b)
        if method == METHOD_CO:
            return compose_co(si.q, sj.q, b, self.cfg.alpha)
        if method == METHOD_GPI:
            return compose_gpi(self.successor_features, w, self.cfg.alpha)
        if method == METHOD_DC:
            return compose_dc(si.q, sj.q, self.correction(b), b)
        if method == METHOD_DC_CHEAP:
            return compose_dc(si.q, sj.q, dc_cheap(self.c_half, b), b)
        if method == METHOD_DC_CHEAP_GPI:
            co = compose_co(si.q, sj.q, b, self.cfg.alpha)
            gpi = compose_gpi(self.successor_features, w, self.cfg.alpha)
            return dc_cheap_gpi(co, dc_cheap(self.c_half, b), gpi)
        if method == METHOD_CONDQ:
            cp = compose_condq(self.mdp, w, self.cfg)
            if not cp.provenance["converged"]:
                raise RuntimeError(f"condq solve at b={b} did not converge")
            return cp
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")

    def oracle(self, b: float) -> SoftSolution:
        return self._require_converged(
            soft_value_iteration(self.mdp, TaskWeights.from_b(b), self.cfg),
            f"oracle solve b={b}",
        )


def _row_for(
    builder: MethodBuilder,
    task: str,
    method: str,
    b: float,
    starts: np.ndarray,
    record_timings: bool,
) -> ResultRow:
    t0 = time.perf_counter()
    w = TaskWeights.from_b(b)
    oracle = builder.oracle(b)
    composed = builder.build(method, b)
    try:
        evaluated = evaluate_policy_maxent(builder.mdp, composed.policy, w, builder.cfg)
    except ValueError as exc:
        raise RuntimeError(f"evaluating method {method} at b={b}: {exc}") from exc
    if not evaluated.converged:
        raise RuntimeError(f"evaluation of method {method} at b={b} did not converge")
    value_optimal = float(oracle.v[starts].mean())
    value_method = float(evaluated.v[starts].mean())
    elapsed_ms = (time.perf_counter() - t0) * 1e3 if record_timings else 0.0
    return ResultRow(
        task=task,
        method=method,
        b=float(b),
        regret=value_optimal - value_method,
        value_optimal=value_optimal,
        value_method=value_method,
        solver_iterations=oracle.iterations_used,
        wall_time_ms=elapsed_ms,
    )


def regret(
    mdp: TabularMdp,
    method: str,
    b: float,
    cfg: SolveConfig,
    start_mode="uniform",
    task: str = "task",
) -> ResultRow:
    """Exact regret of one composed policy on the blended task r_b.

    Solves both base tasks, composes the method's policy, evaluates it
    exactly on r_b, and compares with the direct-solve oracle, averaging
    over the start distribution.
    """
    builder = MethodBuilder(mdp, cfg)
    starts = start_states(mdp, start_mode)
    return _row_for(builder, task, method, b, starts, record_timings=False)


def _task_rows(spec: SweepSpec, task: str) -> list[ResultRow]:
    mdp, label = resolve_task(task, gamma=spec.gamma)
    builder = MethodBuilder(mdp, spec.config)
    starts = start_states(mdp, spec.start_mode)
    return [
        _row_for(builder, label, method, b, starts, spec.record_timings)
        for method in spec.methods
        for b in spec.b_grid
    ]


def sweep(spec: SweepSpec, jobs: int = 1) -> list[ResultRow]:
    """All (task, method, b) rows of the spec, sorted ascending.

    With jobs > 1 tasks run on a thread pool; the sorted output does not
    depend on the worker count.
    """
    if jobs > 1 and len(spec.tasks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(lambda t: _task_rows(spec, t), spec.tasks))
        rows = [row for chunk in chunks for row in chunk]
    else:
        rows = [row for task in spec.tasks for row in _task_rows(spec, task)]
    rows.sort(key=ResultRow.sort_key)
    if spec.output_path is not None:
        write_csv(rows, spec.output_path)
    return rows


def divergence_map(
    mdp: TabularMdp, pi_i: np.ndarray, pi_j: np.ndarray, b: float
) -> np.ndarray:
    """Per-state (1 - b) * Renyi_b divergence of the two base policies."""
    return state_divergence(pi_i, pi_j, b)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(rows: list[ResultRow], path) -> None:
    """CSV with the fixed header, 17-significant-digit reals, UNIX newlines."""
    parent = Path(path).parent
    if str(parent) not in ("", ".") and not parent.exists():
        parent.mkdir(parents=True, exist_ok=True)
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.task,
                    r.method,
                    _fmt(r.b),
                    _fmt(r.regret),
                    _fmt(r.value_optimal),
                    _fmt(r.value_method),
                    str(r.solver_iterations),
                    _fmt(r.wall_time_ms),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_json(rows: list[ResultRow], path) -> None:
    """JSON mirror of the CSV rows, same field names and ordering."""
    import json
    from dataclasses import asdict

    parent = Path(path).parent
    if str(parent) not in ("", ".") and not parent.exists():
        parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(
        json.dumps([asdict(r) for r in rows], sort_keys=True) + "\n", newline="\n"
    )


def read_csv(path) -> list[ResultRow]:
    """Parse a file written by write_csv; bit-exact round trip."""
    text = Path(path).read_text()
    lines = [ln for ln in text.split("\n") if ln]
    if lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected header {lines[0]!r}")
    rows = []
    for ln in lines[1:]:
        task, method, b, reg, vo, vm, iters, wall = ln.split(",")
        rows.append(
            ResultRow(
                task=task,
                method=method,
                b=float(b),
                regret=float(reg),
                value_optimal=float(vo),
                value_method=float(vm),
                solver_iterations=int(iters),
                wall_time_ms=float(wall),
            )
        )
    return rows
