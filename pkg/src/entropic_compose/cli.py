"""Command-line surface: solve, compose, sweep, render, gauss-check.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
non-convergence. Every command is deterministic given its flags and seed;
ENTROPIC_COMPOSE_SEED serves as the seed fallback.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import gauss
from .compose import METHODS, state_divergence
from .harness import (
    DEFAULT_B_GRID,
    MethodBuilder,
    SweepSpec,
    resolve_task,
    sweep,
    write_csv,
)
from .mdp import TaskWeights
from .solver import SolveConfig, evaluate_policy_maxent, soft_value_iteration

SEED_ENV_VAR = "ENTROPIC_COMPOSE_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("formatter_class", argparse.ArgumentDefaultsHelpFormatter)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(message)


def _grid_metadata(mdp) -> dict:
    if mdp.grid_shape is None:
        return {"grid": None, "moves": None}
    return {
        "grid": {"width": mdp.grid_shape[0], "height": mdp.grid_shape[1]},
        "moves": [list(m) for m in mdp.moves],
    }


def _dump(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, sort_keys=True)
    if path is None:
        print(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n", newline="\n")


def _default_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV_VAR)
    return int(env) if env else 0


def _solve_config(args) -> SolveConfig:
    try:
        return SolveConfig(
            alpha=args.alpha,
            tolerance=args.tolerance,
            max_iterations=args.max_iterations,
        )
    except ValueError as exc:
        flag = "--alpha" if "alpha" in str(exc) else (
            "--tolerance" if "tolerance" in str(exc) else "--max-iterations"
        )
        raise UsageError(f"invalid {flag}: {exc}") from exc


def cmd_solve(args) -> int:
    cfg = _solve_config(args)
    mdp, label = resolve_task(args.task, gamma=args.gamma)
    if not 0 <= args.index < mdp.feature_dim:
        raise UsageError(
            f"--index {args.index} outside the task's {mdp.feature_dim} features"
        )
    w = TaskWeights(np.eye(mdp.feature_dim)[args.index])
    sol = soft_value_iteration(mdp, w, cfg)
    doc = {
        "kind": "soft-solution",
        "task": label,
        "w": w.w.tolist(),
        "alpha": cfg.alpha,
        "gamma": mdp.gamma,
        **_grid_metadata(mdp),
        **sol.to_json_dict(),
    }
    _dump(doc, args.out)
    if not sol.converged:
        print(
            f"solver did not converge: residual {sol.residual:.3e} after "
            f"{sol.iterations_used} sweeps",
            file=sys.stderr,
        )
        return 2
    return 0


def _composition_weights(args, feature_dim: int) -> tuple[float | None, TaskWeights]:
    if (args.b is None) == (args.w is None):
        raise UsageError("exactly one of --b or --w is required")
    if args.b is not None:
        if not 0.0 <= args.b <= 1.0:
            raise UsageError(f"--b must lie in [0, 1], got {args.b}")
        return args.b, TaskWeights.from_b(args.b)
    parts = [float(x) for x in args.w.split(",")]
    if len(parts) != feature_dim:
        raise UsageError(f"--w needs {feature_dim} comma-separated entries")
    try:
        w = TaskWeights(np.array(parts))
    except ValueError as exc:
        raise UsageError(f"invalid --w: {exc}") from exc
    b = parts[0] if feature_dim == 2 else None
    return b, w


def _compose_many_features(args, mdp, w, cfg):
    """condq and gpi support arbitrary convex weights; the pairwise methods don't."""
    from .compose import compose_condq, compose_gpi
    from .solver import compute_successor_features

    if args.method == "condq":
        composed = compose_condq(mdp, w, cfg)
        if not composed.provenance["converged"]:
            raise RuntimeError("condq solve did not converge")
        return composed
    if args.method == "gpi":
        sfs = []
        for k in range(mdp.feature_dim):
            base = soft_value_iteration(mdp, TaskWeights(np.eye(mdp.feature_dim)[k]), cfg)
            if not base.converged:
                raise RuntimeError(f"base solve {k} did not converge")
            sf = compute_successor_features(mdp, base.policy, cfg)
            if not sf.converged:
                raise RuntimeError(f"successor features {k} did not converge")
            sfs.append(sf)
        return compose_gpi(sfs, w, cfg.alpha)
    raise UsageError(
        f"method {args.method!r} needs a two-task blend (--b); "
        "--w with more than two entries works with condq and gpi only"
    )


def cmd_compose(args) -> int:
    cfg = _solve_config(args)
    if args.method not in METHODS:
        raise UsageError(
            f"unknown method {args.method!r}; valid methods: {', '.join(METHODS)}"
        )
    mdp, label = resolve_task(args.task, gamma=args.gamma)
    b, w = _composition_weights(args, mdp.feature_dim)
    if b is not None:
        builder = MethodBuilder(mdp, cfg)
        composed = builder.build(args.method, b)
    else:
        composed = _compose_many_features(args, mdp, w, cfg)
    value = evaluate_policy_maxent(mdp, composed.policy, w, cfg)
    if not value.converged:
        raise RuntimeError(f"evaluation of {args.method} at b={b} did not converge")
    doc = {
        "kind": "composed-policy",
        "task": label,
        "b": b,
        "w": w.w.tolist(),
        "alpha": cfg.alpha,
        "gamma": mdp.gamma,
        **_grid_metadata(mdp),
        **composed.to_json_dict(),
        "value_on_task": {
            "per_state": value.v.tolist(),
            "mean_uniform": float(value.v.mean()),
        },
    }
    _dump(doc, args.out)
    return 0


def _parse_b_grid(text: str) -> tuple[float, ...]:
    try:
        grid = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise UsageError(f"invalid --b-grid: {exc}") from exc
    return grid


def cmd_sweep(args) -> int:
    cfg = _solve_config(args)
    tasks = tuple(t for t in args.tasks.split(",") if t)
    methods = tuple(m for m in args.methods.split(",") if m)
    if not methods:
        raise UsageError("empty method list")
    if not tasks:
        raise UsageError("empty task list")
    b_grid = DEFAULT_B_GRID if args.b_grid is None else _parse_b_grid(args.b_grid)
    try:
        spec = SweepSpec(
            tasks=tasks,
            methods=methods,
            b_grid=b_grid,
            config=cfg,
            start_mode=args.start_mode,
            output_path=args.out,
            record_timings=args.timings,
            gamma=args.gamma,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = sweep(spec, jobs=args.jobs)
    if args.out is None:
        write_csv(rows, "/dev/stdout")
    if args.json is not None:
        from .harness import write_json

        write_json(rows, args.json)
    if not args.no_plots and args.out is not None:
        from .plots import save_regret_curves

        out = Path(args.out)
        for task in sorted({r.task for r in rows}):
            save_regret_curves(out.with_name(f"{out.stem}_{task}.svg"), rows, task)
    return 0


def _load_doc(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"input file {path!r} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"input file {path!r} is not valid JSON: {exc}") from exc


def _doc_grid(doc: dict) -> tuple[int, int, tuple]:
    grid = doc.get("grid")
    if not grid:
        raise UsageError("input JSON carries no grid metadata; cannot render")
    moves = tuple(tuple(m) for m in doc["moves"])
    return int(grid["width"]), int(grid["height"]), moves


def _doc_values(doc: dict) -> np.ndarray:
    if "v" in doc:
        return np.asarray(doc["v"], dtype=np.float64)
    return np.asarray(doc["value_on_task"]["per_state"], dtype=np.float64)


def cmd_render(args) -> int:
    from .plots import save_heatmap_figure, save_policy_figure

    doc = _load_doc(args.input)
    width, height, moves = _doc_grid(doc)
    policy = np.asarray(doc["policy"], dtype=np.float64)
    what = args.what
    if what == "policy":
        save_policy_figure(
            args.out,
            _doc_values(doc),
            policy,
            width,
            height,
            moves,
            title=f"{doc.get('task', '')} policy ({doc.get('method', 'solve')})",
        )
    elif what == "value":
        save_heatmap_figure(
            args.out, _doc_values(doc), width, height, title=f"{doc.get('task', '')} value"
        )
    elif what == "divergence":
        if args.input2 is None:
            raise UsageError("--what divergence needs --input2 with the second policy")
        doc2 = _load_doc(args.input2)
        other = np.asarray(doc2["policy"], dtype=np.float64)
        if other.shape != policy.shape:
            raise UsageError("the two policies have different shapes")
        g = state_divergence(policy, other, args.b)
        save_heatmap_figure(
            args.out, g, width, height, title=f"divergence at b={args.b}"
        )
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown --what {what!r}")
    return 0


def _gauss_checks(n: int, seed: int):
    """The estimator acceptance battery; yields (name, passed, detail)."""
    rng_seeds = np.random.SeedSequence(seed).generate_state(8, np.uint64)
    quad = gauss.QuadraticQ(center=[0.0], scale=[1.0 / np.sqrt(2.0)])
    wide = gauss.TruncatedNormalMixture.single([0.0], [10.0])
    from scipy.special import erf

    log_z = float(np.log(np.sqrt(np.pi) * erf(1.0)))

    est = gauss.snis_log_partition(
        quad, wide, 1.0, gauss.SamplerConfig(n, int(rng_seeds[0]))
    )
    err = abs(est - log_z)
    yield "log-partition vs erf oracle", err <= 0.01, f"error={err:.3e} tol=1.0e-02"

    boltz = gauss.TruncatedNormalMixture.single([0.0], [1.0 / np.sqrt(2.0)])
    exact = gauss.snis_log_partition(
        quad, boltz, 1.0, gauss.SamplerConfig(max(n // 100, 1), int(rng_seeds[1]))
    )
    err = abs(exact - log_z)
    yield "log-partition zero-variance", err <= 1e-12, f"error={err:.3e} tol=1.0e-12"

    worst = max(
        abs(gauss.gaussian_renyi(0.3, -0.5, 0.9, b) - gauss.renyi_quadrature(0.3, 0.9, -0.5, 0.9, b))
        for b in (0.2, 0.5, 0.8)
    )
    yield "renyi closed form vs quadrature", worst <= 1e-6, f"error={worst:.3e} tol=1.0e-06"

    g_half = gauss.gaussian_gb(0.2, -0.6, 0.7, 0.5)
    worst = max(
        abs(gauss.gaussian_gb(0.2, -0.6, 0.7, b) - 4 * b * (1 - b) * g_half)
        / abs(4 * b * (1 - b) * g_half)
        for b in np.arange(0.1, 0.95, 0.1)
    )
    yield "G_b rescaling identity", worst <= 1e-12, f"rel error={worst:.3e} tol=1.0e-12"

    b = 0.2
    gb_uneq = (1 - b) * gauss.renyi_quadrature(0.0, 1.0, 1.0, 2.0, b)
    gh_uneq = 0.5 * gauss.renyi_quadrature(0.0, 1.0, 1.0, 2.0, 0.5)
    gap = abs(gb_uneq - 4 * b * (1 - b) * gh_uneq)
    yield "unequal-variance counterexample", gap > 1e-3, f"violation={gap:.3e} > 1.0e-03"

    qi = gauss.TruncatedNormalMixture.single([0.0], [1.0])
    qj = gauss.TruncatedNormalMixture.single([1.0], [1.0])
    prod = gauss.mixture_power_product(qi, qj, 0.5)
    ok = prod.means[0, 0] == 0.5 and prod.scales[0, 0] == 1.0
    grid = np.linspace(-1, 1, 101)
    lhs = -0.5 * ((grid - prod.means[0, 0]) / prod.scales[0, 0]) ** 2 - np.log(
        prod.scales[0, 0]
    )
    rhs = 0.5 * (-0.5 * grid**2) + 0.5 * (-0.5 * (grid - 1.0) ** 2)
    dev = float(np.max(np.abs((lhs - rhs) - (lhs[50] - rhs[50]))))
    yield "proposal product N(0,1)xN(1,1)", ok and dev <= 1e-9, (
        f"mean={prod.means[0, 0]:.1f} sigma={prod.scales[0, 0]:.1f} dev={dev:.3e}"
    )

    target = gauss.QuadraticQ(center=[0.3], scale=[0.2])
    init = gauss.TruncatedNormalMixture(
        weights=np.full(4, 0.25),
        means=np.array([[-0.8], [-0.3], [0.1], [0.7]]),
        scales=np.full((4, 1), 0.4),
    )
    fitted = gauss.fit_proposal(target, init, 1.0, gauss.SamplerConfig(n, int(rng_seeds[2])), 20)
    from scipy.stats import truncnorm

    true_mean = truncnorm.mean((-1 - 0.3) / 0.2, (1 - 0.3) / 0.2, loc=0.3, scale=0.2)
    err = abs(float(gauss.mixture_mean(fitted)[0]) - true_mean)
    yield "EM proposal fit mean", err <= 0.02, f"error={err:.3e} tol=2.0e-02"

    pts = gauss.mixture_sample(wide, gauss.SamplerConfig(max(n, 2), int(rng_seeds[3])))
    f = lambda a: np.sin(3.0 * a[:, 0])
    w1 = gauss.snis_weights(f, wide, pts, 0.7)
    w2 = gauss.snis_weights(lambda a: f(a) + 55.5, wide, pts, 0.7)
    sum_err = abs(float(w1.sum()) - 1.0)
    shift_err = float(np.max(np.abs(w1 - w2)))
    yield "snis weights normalize/shift", sum_err <= 1e-14 and shift_err <= 1e-12, (
        f"sum error={sum_err:.1e} shift error={shift_err:.1e}"
    )


def cmd_gauss_check(args) -> int:
    seed = _default_seed(args.seed)
    lines = [f"gauss-check: n={args.n} seed={seed}"]
    all_ok = True
    for name, ok, detail in _gauss_checks(args.n, seed):
        all_ok &= ok
        lines.append(f"[{'PASS' if ok else 'FAIL'}] {name:34s} {detail}")
    lines.append("result: " + ("all checks passed" if all_ok else "FAILURES present"))
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)
    if args.out is not None:
        Path(args.out).write_text(report, newline="\n")
    return 0 if all_ok else 1


def _add_solver_flags(p: argparse.ArgumentParser, alpha_default: float = 0.1):
    p.add_argument("--alpha", type=float, default=alpha_default, help="entropy temperature")
    p.add_argument("--gamma", type=float, default=None, help="override the task discount")
    p.add_argument("--tolerance", type=float, default=1e-10, help="sup-norm stopping threshold")
    p.add_argument("--max-iterations", type=int, default=100_000)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="entropic-compose", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one base task exactly")
    p.add_argument("--task", required=True, help="LR | LU | T | pointmass | path to task JSON")
    p.add_argument("--index", type=int, default=0, help="which base reward feature to solve")
    _add_solver_flags(p)
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compose", help="compose base policies for a blended task")
    p.add_argument("--task", required=True)
    p.add_argument("--method", required=True, help=f"one of: {', '.join(METHODS)}")
    p.add_argument("--b", type=float, default=None, help="blend weight of the first task")
    p.add_argument("--w", default=None, help="comma-separated task weights (alternative to --b)")
    _add_solver_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("sweep", help="regret sweep over tasks x methods x b")
    p.add_argument("--tasks", required=True, help="comma-separated task names")
    p.add_argument("--methods", required=True, help="comma-separated method names")
    p.add_argument("--b-grid", default=None, help="comma-separated b values (default 0,0.1,...,1)")
    p.add_argument("--start-mode", default="uniform", choices=("uniform", "center"))
    _add_solver_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel task workers")
    p.add_argument("--timings", action="store_true", help="record wall times (non-deterministic output)")
    p.add_argument("--no-plots", action="store_true", help="skip the SVG regret figures")
    p.add_argument("--out", default=None, help="CSV path (default stdout); figures land next to it")
    p.add_argument("--json", default=None, help="also write a JSON mirror of the rows here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="render a solution/policy JSON to SVG")
    p.add_argument("--input", required=True, help="solution or composed-policy JSON")
    p.add_argument("--input2", default=None, help="second policy JSON for divergence maps")
    p.add_argument("--what", default="policy", choices=("policy", "value", "divergence"))
    p.add_argument("--b", type=float, default=0.5, help="divergence order weight")
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("gauss-check", help="run the estimator verification battery")
    p.add_argument("--n", type=int, default=100_000, help="sample count per estimator")
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (fallback ${SEED_ENV_VAR})")
    p.add_argument("--out", default=None, help="also write the report to this path")
    p.set_defaults(func=cmd_gauss_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_help()
            return 1
        return args.func(args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
