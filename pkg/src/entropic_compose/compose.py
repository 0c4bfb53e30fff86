"""Transfer composition of max-ent policies.

Given base policies solved for individual reward features, these builders
produce acting policies for a convex blend of the rewards:

- compositional optimism (CO): act on the weighted average of base
  action-values, an over-estimate of the blend's true action-value;
- max-ent generalized policy improvement (GPI): act on the pointwise max
  of the base policies' values on the blend, a lower bound;
- divergence correction (DC): subtract from the CO estimate the
  discounted future divergence between the base policies, recovering the
  blend's optimal action-value exactly;
- DC-Cheap: rescale the b=1/2 correction by 4 b (1 - b) instead of
  recomputing it (exact for equal-variance Gaussian policies);
- CondQ: solve the blended task directly, the tabular oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, TaskWeights
from .solver import (
    SolveConfig,
    SuccessorFeatures,
    boltzmann_policy,
    logsumexp_rows,
    soft_value_iteration,
)

METHOD_CO = "co"
METHOD_GPI = "gpi"
METHOD_DC = "dc"
METHOD_DC_CHEAP = "dc-cheap"
METHOD_DC_CHEAP_GPI = "dc-cheap-gpi"
METHOD_CONDQ = "condq"
METHODS = (
    METHOD_CO,
    METHOD_GPI,
    METHOD_DC,
    METHOD_DC_CHEAP,
    METHOD_DC_CHEAP_GPI,
    METHOD_CONDQ,
)


@dataclass(frozen=True)
class CorrectionTable:
    """Divergence correction C(s, a) for one task weighting.

    On converged instances C is nonnegative up to solver noise: the CO
    value it corrects is an over-estimate of the true action-value.
    `heuristic` marks tables produced by the DC-Cheap rescaling rather
    than the exact fixed point.
    """

    c: np.ndarray          # (S, A)
    weights: np.ndarray    # task weights the table was computed for
    alpha: float
    iterations_used: int
    converged: bool
    residual: float
    heuristic: bool = False

    @property
    def b(self) -> float:
        """Two-task shorthand: weight of the first task."""
        if self.weights.size != 2:
            raise ValueError("b is only defined for two-task corrections")
        return float(self.weights[0])


@dataclass(frozen=True)
class ComposedPolicy:
    """Acting policy of a transfer method: Q table, Boltzmann policy, provenance."""

    method: str
    q: np.ndarray        # (S, A)
    policy: np.ndarray   # (S, A)
    alpha: float
    provenance: dict

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "q": self.q.tolist(),
            "policy": self.policy.tolist(),
            "alpha": self.alpha,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ComposedPolicy":
        return cls(
            method=str(doc["method"]),
            q=np.asarray(doc["q"], dtype=np.float64),
            policy=np.asarray(doc["policy"], dtype=np.float64),
            alpha=float(doc["alpha"]),
            provenance=dict(doc["provenance"]),
        )


def _check_same_shape(*tables: np.ndarray):
    shapes = {t.shape for t in tables}
    if len(shapes) != 1:
        raise ValueError(f"Q tables must share a shape, got {sorted(shapes)}")


def _check_b(b: float) -> float:
    b = float(b)
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"b must lie in [0, 1], got {b}")
    return b


def compose_co(qi: np.ndarray, qj: np.ndarray, b: float, alpha: float) -> ComposedPolicy:
    """Compositional optimism: Q = b Qi + (1 - b) Qj."""
    b = _check_b(b)
    qi = np.asarray(qi, dtype=np.float64)
    qj = np.asarray(qj, dtype=np.float64)
    _check_same_shape(qi, qj)
    q = b * qi + (1.0 - b) * qj
    return ComposedPolicy(
        method=METHOD_CO,
        q=q,
        policy=boltzmann_policy(q, alpha),
        alpha=alpha,
        provenance={"b": b},
    )


def compose_gpi(
    sf_list: list[SuccessorFeatures], w: TaskWeights, alpha: float
) -> ComposedPolicy:
    """Max-ent GPI: Boltzmann of max_i psi_i . w.

    The max is over values, so ties need no tie-breaking. All successor
    features must share the MDP shape and the temperature alpha.
    """
    if not sf_list:
        raise ValueError("need at least one set of successor features")
    shapes = {sf.psi.shape for sf in sf_list}
    if len(shapes) != 1:
        raise ValueError(f"successor features must share a shape, got {sorted(shapes)}")
    for sf in sf_list:
        if sf.alpha != alpha:
            raise ValueError(
                f"successor features computed at alpha={sf.alpha}, composing at {alpha}"
            )
    dim = sf_list[0].psi.shape[2]
    if len(w) != dim:
        raise ValueError(f"weights have {len(w)} entries, features have {dim}")
    q_per_policy = np.stack([sf.psi @ w.w for sf in sf_list])
    q = q_per_policy.max(axis=0)
    return ComposedPolicy(
        method=METHOD_GPI,
        q=q,
        policy=boltzmann_policy(q, alpha),
        alpha=alpha,
        provenance={"w": w.w.tolist(), "num_policies": len(sf_list)},
    )


def _log_policy(policy: np.ndarray) -> np.ndarray:
    p = np.asarray(policy, dtype=np.float64)
    logs = np.full_like(p, -np.inf)
    np.log(p, out=logs, where=p > 0)
    return logs


def _weighted_log_product(policies: list[np.ndarray], weights: np.ndarray) -> np.ndarray:
    """sum_i w_i log pi_i with zero-weight terms dropped (0 * -inf := 0)."""
    out = np.zeros_like(np.asarray(policies[0], dtype=np.float64))
    for pi, wi in zip(policies, weights):
        if wi > 0.0:
            out = out + wi * _log_policy(pi)
    return out


def _correction_fixed_point(
    mdp: TabularMdp, log_product: np.ndarray, weights: np.ndarray, cfg: SolveConfig
) -> CorrectionTable:
    """Iterate C <- -alpha gamma E_{s'}[log sum_a exp(log_product - C/alpha)].

    Zero-probability actions contribute -inf terms and drop out of the
    log-sum-exp. Starts from C = 0 and stops on sup-norm change.
    """
    alpha, gamma = cfg.alpha, mdp.gamma
    p_flat = mdp.transitions.reshape(-1, mdp.num_states)

    c = np.zeros((mdp.num_states, mdp.num_actions))
    residual = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, cfg.max_iterations + 1):
        inner = logsumexp_rows(log_product - c / alpha)   # (S,)
        c_new = -alpha * gamma * (p_flat @ inner).reshape(c.shape)
        residual = float(np.max(np.abs(c_new - c)))
        c = c_new
        if residual <= cfg.tolerance:
            converged = True
            break

    return CorrectionTable(
        c=c,
        weights=weights,
        alpha=alpha,
        iterations_used=iterations,
        converged=converged,
        residual=residual,
    )


def dc_fixed_point(
    mdp: TabularMdp,
    pi_i: np.ndarray,
    pi_j: np.ndarray,
    b: float,
    cfg: SolveConfig,
) -> CorrectionTable:
    """Exact divergence correction for the two-task blend b, 1 - b.

    C is the fixed point of
    C(s,a) = -alpha gamma E_{s'}[log sum_a' pi_i^b pi_j^(1-b) exp(-C/alpha)],
    the discounted future divergence accumulated by the product policy.
    """
    b = _check_b(b)
    weights = np.array([b, 1.0 - b])
    log_product = _weighted_log_product([pi_i, pi_j], weights)
    return _correction_fixed_point(mdp, log_product, weights, cfg)


def dc_n_fixed_point(
    mdp: TabularMdp,
    policies: list[np.ndarray],
    w: TaskWeights,
    cfg: SolveConfig,
) -> CorrectionTable:
    """N-policy divergence correction with product prod_i pi_i^{w_i}.

    For two policies and w = (b, 1 - b) this coincides with
    dc_fixed_point; for one-hot w the product collapses to the selected
    policy and C is identically zero.
    """
    if len(policies) < 2:
        raise ValueError("need at least two policies")
    if len(w) != len(policies):
        raise ValueError(f"got {len(policies)} policies but {len(w)} weights")
    log_product = _weighted_log_product(list(policies), w.w)
    return _correction_fixed_point(mdp, log_product, w.w.copy(), cfg)


def compose_dc(
    qi: np.ndarray, qj: np.ndarray, correction: CorrectionTable, b: float
) -> ComposedPolicy:
    """Divergence-corrected composition: Q = b Qi + (1 - b) Qj - C."""
    b = _check_b(b)
    if abs(correction.b - b) > 1e-12:
        raise ValueError(f"correction was computed for b={correction.b}, composing at b={b}")
    qi = np.asarray(qi, dtype=np.float64)
    qj = np.asarray(qj, dtype=np.float64)
    _check_same_shape(qi, qj, correction.c)
    q = b * qi + (1.0 - b) * qj - correction.c
    method = METHOD_DC_CHEAP if correction.heuristic else METHOD_DC
    return ComposedPolicy(
        method=method,
        q=q,
        policy=boltzmann_policy(q, correction.alpha),
        alpha=correction.alpha,
        provenance={"b": b, "heuristic": correction.heuristic},
    )


def dc_cheap(c_half: CorrectionTable, b: float) -> CorrectionTable:
    """Heuristic correction 4 b (1 - b) * C_{1/2}.

    Exact when both base policies are Gaussians of equal (state-wise)
    variance; elsewhere an approximation, hence tagged heuristic.
    """
    b = _check_b(b)
    if abs(c_half.b - 0.5) > 1e-12:
        raise ValueError(f"dc_cheap needs the b=1/2 correction, got b={c_half.b}")
    scale = 4.0 * b * (1.0 - b)
    return CorrectionTable(
        c=scale * c_half.c,
        weights=np.array([b, 1.0 - b]),
        alpha=c_half.alpha,
        iterations_used=c_half.iterations_used,
        converged=c_half.converged,
        residual=c_half.residual,
        heuristic=True,
    )


def dc_cheap_gpi(
    co: ComposedPolicy, c_cheap: CorrectionTable, gpi: ComposedPolicy
) -> ComposedPolicy:
    """Elementwise max(Q_CO - C_cheap, Q_GPI): heuristic DC floored by GPI."""
    if not (co.alpha == c_cheap.alpha == gpi.alpha):
        raise ValueError(
            f"mixed temperatures: co={co.alpha}, correction={c_cheap.alpha}, gpi={gpi.alpha}"
        )
    _check_same_shape(co.q, c_cheap.c, gpi.q)
    q = np.maximum(co.q - c_cheap.c, gpi.q)
    return ComposedPolicy(
        method=METHOD_DC_CHEAP_GPI,
        q=q,
        policy=boltzmann_policy(q, co.alpha),
        alpha=co.alpha,
        provenance={"b": c_cheap.b},
    )


def compose_condq(mdp: TabularMdp, w: TaskWeights, cfg: SolveConfig) -> ComposedPolicy:
    """Direct solve of the blended task; the tabular transfer oracle."""
    sol = soft_value_iteration(mdp, w, cfg)
    return ComposedPolicy(
        method=METHOD_CONDQ,
        q=sol.q,
        policy=sol.policy,
        alpha=cfg.alpha,
        provenance={
            "w": w.w.tolist(),
            "iterations_used": sol.iterations_used,
            "converged": sol.converged,
        },
    )


def state_divergence(pi_i: np.ndarray, pi_j: np.ndarray, b: float) -> np.ndarray:
    """Per-state (1 - b) * Renyi_b(pi_i || pi_j) = -log sum_a pi_i^b pi_j^(1-b).

    Computed in log space; zero wherever the policies coincide.
    """
    b = _check_b(b)
    log_product = _weighted_log_product([pi_i, pi_j], np.array([b, 1.0 - b]))
    return -logsumexp_rows(log_product)


def renyi_correction_step(
    mdp: TabularMdp, pi_i: np.ndarray, pi_j: np.ndarray, b: float, alpha: float
) -> np.ndarray:
    """First divergence-correction iterate via the Renyi divergence form.

    C^(1)(s, a) = alpha gamma E_{s'}[(1 - b) Renyi_b(pi_i(.|s') || pi_j(.|s'))],
    identical to one sweep of dc_fixed_point from C = 0.
    """
    g = state_divergence(pi_i, pi_j, b)   # (S,)
    p_flat = mdp.transitions.reshape(-1, mdp.num_states)
    return alpha * mdp.gamma * (p_flat @ g).reshape(mdp.num_states, mdp.num_actions)
