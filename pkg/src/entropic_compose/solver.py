"""Exact maximum-entropy RL on tabular MDPs.

Soft value iteration, Boltzmann policy extraction, max-ent policy
evaluation, and max-ent successor features. All sweeps are synchronous
(Jacobi), so results are independent of any parallel scheduling, and all
log-sum-exp reductions are max-shifted for stability. Entropies are in
nats, with 0 log 0 taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, TaskWeights, validate


@dataclass(frozen=True)
class SolveConfig:
    """Solver settings: entropy temperature and stopping rule.

    alpha is the weight of the per-step policy entropy bonus (reward units
    per nat). Iteration stops when the sup-norm change of V between sweeps
    drops to `tolerance`.
    """

    alpha: float
    tolerance: float = 1e-10
    max_iterations: int = 100_000

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class SoftSolution:
    """Soft action-values, values, the acting policy and per-state log Z.

    For solver output the policy is the Boltzmann policy of q and
    log_partition equals v / alpha; for policy evaluation the policy field
    is the evaluated (input) policy.
    """

    q: np.ndarray              # (S, A)
    v: np.ndarray              # (S,)
    policy: np.ndarray         # (S, A)
    log_partition: np.ndarray  # (S,)
    iterations_used: int
    converged: bool
    residual: float

    def to_json_dict(self) -> dict:
        return {
            "q": self.q.tolist(),
            "v": self.v.tolist(),
            "policy": self.policy.tolist(),
            "log_partition": self.log_partition.tolist(),
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "residual": self.residual,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SoftSolution":
        return cls(
            q=np.asarray(doc["q"], dtype=np.float64),
            v=np.asarray(doc["v"], dtype=np.float64),
            policy=np.asarray(doc["policy"], dtype=np.float64),
            log_partition=np.asarray(doc["log_partition"], dtype=np.float64),
            iterations_used=int(doc["iterations_used"]),
            converged=bool(doc["converged"]),
            residual=float(doc["residual"]),
        )


@dataclass(frozen=True)
class SuccessorFeatures:
    """Max-ent successor features psi(s, a) and upsilon(s) of a fixed policy.

    psi accumulates the discounted reward features plus, through upsilon,
    an entropy bonus of alpha * H[pi(.|s)] added uniformly to every feature
    dimension, so psi . w is the max-ent action-value of the policy under
    any convex task weighting w.
    """

    psi: np.ndarray       # (S, A, d)
    upsilon: np.ndarray   # (S, d)
    policy: np.ndarray    # (S, A)
    alpha: float
    iterations_used: int
    converged: bool
    residual: float


def logsumexp_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp over the last axis with max shift.

    -inf entries drop out of the sum; an all--inf row yields -inf.
    """
    m = np.max(x, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(m, -1) + np.log(np.sum(np.exp(x - m), axis=-1))


def boltzmann_policy(q: np.ndarray, alpha: float) -> np.ndarray:
    """Rows proportional to exp(q / alpha), normalized stably."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    q = np.asarray(q, dtype=np.float64)
    if np.isnan(q).any():
        raise ValueError("q contains NaN")
    z = q / alpha
    z = z - np.max(z, axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def policy_entropy(policy: np.ndarray) -> np.ndarray:
    """Per-state Shannon entropy in nats; 0 log 0 = 0."""
    p = np.asarray(policy, dtype=np.float64)
    logs = np.zeros_like(p)
    np.log(p, out=logs, where=p > 0)
    return -(p * logs).sum(axis=-1)


def _check_stochastic(policy: np.ndarray, num_states: int, num_actions: int):
    p = np.asarray(policy, dtype=np.float64)
    if p.shape != (num_states, num_actions):
        raise ValueError(f"policy shape {p.shape} does not match MDP")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("policy rows must be probability distributions")
    return p


def _check_inputs(mdp: TabularMdp, w: TaskWeights):
    problems = validate(mdp)
    if problems:
        raise ValueError(f"invalid MDP: {problems[0]} ({len(problems)} total)")
    if len(w) != mdp.feature_dim:
        raise ValueError(
            f"task weights have {len(w)} entries, MDP has {mdp.feature_dim} features"
        )


def soft_value_iteration(
    mdp: TabularMdp, w: TaskWeights, cfg: SolveConfig
) -> SoftSolution:
    """Solve the max-ent control problem for reward phi . w.

    Iterates Q(s,a) <- r_w(s,a) + gamma E_{s'}[V(s')] with
    V(s) = alpha * logsumexp_a Q(s,a)/alpha until the sup-norm change of V
    reaches cfg.tolerance. The returned policy is the Boltzmann policy of
    the final Q.
    """
    _check_inputs(mdp, w)
    r = mdp.rewards(w)
    p_flat = mdp.transitions.reshape(-1, mdp.num_states)
    gamma, alpha = mdp.gamma, cfg.alpha

    v = np.zeros(mdp.num_states)
    q = r.copy()
    residual = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, cfg.max_iterations + 1):
        q = r + gamma * (p_flat @ v).reshape(r.shape)
        v_new = alpha * logsumexp_rows(q / alpha)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= cfg.tolerance:
            converged = True
            break

    policy = boltzmann_policy(q, alpha)
    return SoftSolution(
        q=q,
        v=v,
        policy=policy,
        log_partition=v / alpha,
        iterations_used=iterations,
        converged=converged,
        residual=residual,
    )


def evaluate_policy_maxent(
    mdp: TabularMdp, policy: np.ndarray, w: TaskWeights, cfg: SolveConfig
) -> SoftSolution:
    """Exact max-ent evaluation of a given policy under reward phi . w.

    Fixed point of Q(s,a) <- r_w + gamma E[V(s')] with
    V(s) = sum_a pi(a|s) Q(s,a) + alpha H[pi(.|s)]; the entropy of the
    current state is excluded from Q. The returned policy is the input
    policy, not a Boltzmann of the evaluated Q.
    """
    _check_inputs(mdp, w)
    pi = _check_stochastic(policy, mdp.num_states, mdp.num_actions)
    r = mdp.rewards(w)
    p_flat = mdp.transitions.reshape(-1, mdp.num_states)
    gamma, alpha = mdp.gamma, cfg.alpha
    entropy_bonus = alpha * policy_entropy(pi)

    v = np.zeros(mdp.num_states)
    q = r.copy()
    residual = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, cfg.max_iterations + 1):
        q = r + gamma * (p_flat @ v).reshape(r.shape)
        v_new = (pi * q).sum(axis=1) + entropy_bonus
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= cfg.tolerance:
            converged = True
            break

    return SoftSolution(
        q=q,
        v=v,
        policy=pi,
        log_partition=v / alpha,
        iterations_used=iterations,
        converged=converged,
        residual=residual,
    )


def compute_successor_features(
    mdp: TabularMdp, policy: np.ndarray, cfg: SolveConfig
) -> SuccessorFeatures:
    """Max-ent successor features of a fixed policy.

    Fixed point of psi(s,a) = E_{s'}[phi] + gamma E_{s'}[upsilon(s')] with
    upsilon(s) = sum_a pi(a|s) psi(s,a) + alpha * 1 * H[pi(.|s)].
    Convergence is sup-norm over every feature dimension of upsilon.
    """
    pi = _check_stochastic(policy, mdp.num_states, mdp.num_actions)
    phi = mdp.expected_features()
    p_flat = mdp.transitions.reshape(-1, mdp.num_states)
    gamma, alpha = mdp.gamma, cfg.alpha
    entropy_bonus = alpha * policy_entropy(pi)  # added to every dimension

    upsilon = np.zeros((mdp.num_states, mdp.feature_dim))
    psi = phi.copy()
    residual = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, cfg.max_iterations + 1):
        psi = phi + gamma * (p_flat @ upsilon).reshape(phi.shape)
        upsilon_new = np.einsum("sa,sad->sd", pi, psi) + entropy_bonus[:, None]
        residual = float(np.max(np.abs(upsilon_new - upsilon)))
        upsilon = upsilon_new
        if residual <= cfg.tolerance:
            converged = True
            break

    return SuccessorFeatures(
        psi=psi,
        upsilon=upsilon,
        policy=pi,
        alpha=alpha,
        iterations_used=iterations,
        converged=converged,
        residual=residual,
    )
