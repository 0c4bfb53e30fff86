"""Importance-sampling toolkit for Boltzmann policies on a bounded box.

Proposals are mixtures of diagonal truncated normals on [-1, 1)^n,
optionally carrying one explicit uniform component. The module provides
stable log densities, seeded inverse-CDF sampling, b-weighted products of
proposals (truncation ignored, so products stay in the family),
self-normalized importance-sampling (SNIS) estimators for log-partition
functions and forward-KL proposal fitting, sampling-importance-resampling
(SIR) of a Boltzmann policy, and the closed-form Renyi identities for
equal-variance Gaussians that justify the cheap divergence-correction
rescaling.

Every stochastic operation takes an explicit seed; there is no global RNG.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

BOX_LOW = -1.0
BOX_HIGH = 1.0

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

SCALE_FLOOR = 1e-3
WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class SamplerConfig:
    """Sample count and RNG seed for the stochastic estimators."""

    sample_count: int
    rng_seed: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")


@dataclass(frozen=True)
class TruncatedNormalMixture:
    """Mixture of diagonal truncated normals on the box [-1, 1)^n.

    weights lie on the simplex. With uniform_component=True the mixture
    carries one extra flat component of exact density 2^-n whose weight is
    the last entry of `weights` (so len(weights) == len(means) + 1).
    """

    weights: np.ndarray   # (M,) or (M + 1,) with uniform_component
    means: np.ndarray     # (M, n)
    scales: np.ndarray    # (M, n)
    uniform_component: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        sd = np.atleast_2d(np.asarray(self.scales, dtype=np.float64))
        if mu.shape != sd.shape:
            raise ValueError(f"means {mu.shape} and scales {sd.shape} must match")
        expected = mu.shape[0] + (1 if self.uniform_component else 0)
        if w.ndim != 1 or w.size != expected:
            raise ValueError(f"expected {expected} weights, got {w.size}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if np.any(sd <= 0):
            raise ValueError("scales must be strictly positive")
        for name, arr in (("weights", w), ("means", mu), ("scales", sd)):
            a = np.ascontiguousarray(arr)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def num_components(self) -> int:
        return self.weights.size

    @classmethod
    def single(cls, mean, scale) -> "TruncatedNormalMixture":
        return cls(np.array([1.0]), np.atleast_2d(mean), np.atleast_2d(scale))

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            "uniform_component": self.uniform_component,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TruncatedNormalMixture":
        q = cls(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            means=np.asarray(doc["means"], dtype=np.float64),
            scales=np.asarray(doc["scales"], dtype=np.float64),
            uniform_component=bool(doc["uniform_component"]),
        )
        if q.dim != int(doc["dim"]):
            raise ValueError("dim field does not match means")
        return q


@dataclass(frozen=True)
class QuadraticQ:
    """Analytic action-value Q(a) = offset - sum_k (a_k - center_k)^2 / (2 scale_k^2).

    Its Boltzmann policy at temperature alpha is the Gaussian with mean
    `center` and per-coordinate deviation scale * sqrt(alpha), restricted
    to the box, which makes exact cross-checks of the estimators possible.
    """

    center: np.ndarray
    scale: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=np.float64))
        s = np.atleast_1d(np.asarray(self.scale, dtype=np.float64))
        if c.shape != s.shape:
            raise ValueError("center and scale must have the same shape")
        if np.any(s <= 0):
            raise ValueError("scale must be strictly positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "scale", s)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(np.asarray(points, dtype=np.float64))
        z = (a - self.center) / self.scale
        q = self.offset - 0.5 * np.sum(z * z, axis=-1)
        return q if np.asarray(points).ndim > 1 else q[0]


def _as_points(q: TruncatedNormalMixture, a) -> tuple[np.ndarray, bool]:
    pts = np.asarray(a, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != q.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, mixture has {q.dim}")
    return pts, single


def _component_log_densities(q: TruncatedNormalMixture, pts: np.ndarray) -> np.ndarray:
    """(N, M) truncated-normal log densities for the normal components."""
    x = pts[:, None, :]                       # (N, 1, n)
    mu, sd = q.means[None], q.scales[None]    # (1, M, n)
    z = (x - mu) / sd
    log_pdf = -0.5 * z * z - np.log(sd) - _LOG_SQRT_2PI
    lo = (BOX_LOW - q.means) / q.scales
    hi = (BOX_HIGH - q.means) / q.scales
    log_norm = np.log(ndtr(hi) - ndtr(lo))    # (M, n)
    return np.sum(log_pdf - log_norm[None], axis=2)


def mixture_log_density(q: TruncatedNormalMixture, a) -> np.ndarray | float:
    """Log density of the mixture at one point (n,) or a batch (N, n).

    Points outside the box get -inf.
    """
    pts, single = _as_points(q, a)
    comp = _component_log_densities(q, pts)
    if q.uniform_component:
        flat = np.full((pts.shape[0], 1), -q.dim * np.log(2.0))
        comp = np.concatenate([comp, flat], axis=1)
    with np.errstate(divide="ignore"):
        logs = comp + np.log(q.weights)[None]
    m = logs.max(axis=1)
    out = np.where(
        np.isfinite(m),
        m + np.log(np.exp(logs - np.where(np.isfinite(m), m, 0.0)[:, None]).sum(axis=1)),
        -np.inf,
    )
    inside = np.all((pts >= BOX_LOW) & (pts <= BOX_HIGH), axis=1)
    out = np.where(inside, out, -np.inf)
    return float(out[0]) if single else out


def _sample_with_rng(
    q: TruncatedNormalMixture, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    comp = rng.choice(q.num_components, size=n_samples, p=q.weights)
    u = rng.uniform(size=(n_samples, q.dim))
    m = q.means.shape[0]
    normal = comp < m
    out = np.empty((n_samples, q.dim))
    if normal.any():
        idx = comp[normal]
        mu, sd = q.means[idx], q.scales[idx]
        lo = ndtr((BOX_LOW - mu) / sd)
        hi = ndtr((BOX_HIGH - mu) / sd)
        out[normal] = mu + sd * ndtri(lo + u[normal] * (hi - lo))
    if (~normal).any():
        out[~normal] = BOX_LOW + (BOX_HIGH - BOX_LOW) * u[~normal]
    # Keep draws inside the half-open box even after CDF round-off.
    return np.clip(out, BOX_LOW, np.nextafter(BOX_HIGH, BOX_LOW))


def mixture_sample(q: TruncatedNormalMixture, cfg: SamplerConfig) -> np.ndarray:
    """N i.i.d. draws, (N, n), by per-coordinate inverse-CDF sampling.

    Deterministic for a given seed; all draws lie in [-1, 1)^n.
    """
    return _sample_with_rng(q, cfg.sample_count, np.random.default_rng(cfg.rng_seed))


def mixture_mean(q: TruncatedNormalMixture) -> np.ndarray:
    """Mixture mean using the truncated-normal moment formula."""
    lo = (BOX_LOW - q.means) / q.scales
    hi = (BOX_HIGH - q.means) / q.scales
    phi = lambda z: np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    comp_means = q.means + q.scales * (phi(lo) - phi(hi)) / (ndtr(hi) - ndtr(lo))
    m = q.means.shape[0]
    mean = q.weights[:m] @ comp_means
    # The uniform block is centered, so it contributes nothing.
    return mean


def mixture_power_product(
    qi: TruncatedNormalMixture, qj: TruncatedNormalMixture, b: float
) -> TruncatedNormalMixture:
    """The b-weighted product qi^b * qj^(1-b), renormalized.

    Truncation is ignored while forming the product, so the result is
    again a mixture in the family: component (m, l) combines precisions
    b / si^2 + (1-b) / sj^2 per coordinate, and its weight picks up the
    exact un-truncated Gaussian pairing constant before renormalization.
    """
    if qi.dim != qj.dim:
        raise ValueError(f"dimension mismatch: {qi.dim} vs {qj.dim}")
    if qi.uniform_component or qj.uniform_component:
        raise ValueError("power product is defined for purely normal mixtures")
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"b must lie in [0, 1], got {b}")

    mi, si, wi = qi.means, qi.scales, qi.weights
    mj, sj, wj = qj.means, qj.scales, qj.weights

    vi, vj = si**2, sj**2                         # (Mi, n), (Mj, n)
    prec = b / vi[:, None] + (1.0 - b) / vj[None]  # (Mi, Mj, n)
    var = 1.0 / prec
    mean = var * (b * (mi / vi)[:, None] + (1.0 - b) * (mj / vj)[None])

    # log of int N(x; mi, si)^b N(x; mj, sj)^(1-b) dx, per coordinate:
    # complete the square; the cross term is the Mahalanobis gap between
    # the component means under the convex combination of variances.
    gap = (mi[:, None] - mj[None]) ** 2
    cross = b * (1.0 - b) * gap / (b * vj[None] + (1.0 - b) * vi[:, None])
    log_pair = (
        -b * (np.log(vi)[:, None] + np.log(2 * np.pi)) / 2
        - (1.0 - b) * (np.log(vj)[None] + np.log(2 * np.pi)) / 2
        + 0.5 * (np.log(2 * np.pi) - np.log(prec))
        - 0.5 * cross
    ).sum(axis=2)                                  # (Mi, Mj)

    raw = (wi[:, None] ** b) * (wj[None] ** (1.0 - b)) * np.exp(log_pair)
    weights = (raw / raw.sum()).reshape(-1)
    n = qi.dim
    return TruncatedNormalMixture(
        weights=weights,
        means=mean.reshape(-1, n),
        scales=np.sqrt(var).reshape(-1, n),
    )


def transfer_proposal(
    qi: TruncatedNormalMixture, qj: TruncatedNormalMixture, b: float
) -> TruncatedNormalMixture:
    """Equal-weight mixture of qi, qj, their b-product, and the uniform.

    Component count is Mi + Mj + Mi * Mj + 1; the uniform block has exact
    density 2^-n, so the proposal is floored at 1/4 * 2^-n on the box.
    """
    prod = mixture_power_product(qi, qj, b)
    weights = np.concatenate(
        [0.25 * qi.weights, 0.25 * qj.weights, 0.25 * prod.weights, [0.25]]
    )
    return TruncatedNormalMixture(
        weights=weights,
        means=np.concatenate([qi.means, qj.means, prod.means]),
        scales=np.concatenate([qi.scales, qj.scales, prod.scales]),
        uniform_component=True,
    )


def _log_weights(Q, q: TruncatedNormalMixture, points: np.ndarray, alpha: float):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    pts, _ = _as_points(q, points)
    qv = np.asarray(Q(pts), dtype=np.float64)
    logq = mixture_log_density(q, pts)
    logw = qv / alpha - logq
    if not np.any(np.isfinite(logw)):
        raise ValueError("proposal misses the support: all importance weights vanish")
    return logw


def snis_weights(Q, q: TruncatedNormalMixture, points, alpha: float) -> np.ndarray:
    """Self-normalized importance weights exp(Q/alpha) / q, summing to 1.

    Normalized in log space, so the weights are invariant to adding a
    constant to Q.
    """
    logw = _log_weights(Q, q, points, alpha)
    logw = logw - logw[np.isfinite(logw)].max()
    w = np.exp(logw)
    w = w / w.sum()
    return w / w.sum()


def snis_log_partition(
    Q, q: TruncatedNormalMixture, alpha: float, cfg: SamplerConfig
) -> float:
    """SNIS estimate of alpha * log int exp(Q(a)/alpha) da over the box.

    Draws cfg.sample_count points from q and reduces
    alpha * (logsumexp(Q/alpha - log q) - log N) in log space. Biased for
    finite N; the bias shrinks as N grows.
    """
    points = mixture_sample(q, cfg)
    logw = _log_weights(Q, q, points, alpha)
    m = logw[np.isfinite(logw)].max()
    lse = m + np.log(np.exp(logw - m).sum())
    return float(alpha * (lse - np.log(cfg.sample_count)))


def sir_policy_sample(
    Q, proposal: TruncatedNormalMixture, alpha: float, cfg: SamplerConfig
) -> np.ndarray:
    """One action from the Boltzmann policy of Q via SIR.

    Draws cfg.sample_count proposals, computes SNIS weights, and resamples
    a single point from them; with sample_count=1 the proposal draw is
    returned unchanged.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    points = _sample_with_rng(proposal, cfg.sample_count, rng)
    w = snis_weights(Q, proposal, points, alpha)
    idx = rng.choice(points.shape[0], p=w)
    return points[idx]


def _uniform_guard(q: TruncatedNormalMixture) -> TruncatedNormalMixture:
    """Blend 3/4 of the mixture with a 1/4 uniform block for safe sampling."""
    return TruncatedNormalMixture(
        weights=np.concatenate([0.75 * q.weights, [0.25]]),
        means=q.means,
        scales=q.scales,
        uniform_component=True,
    )


def _em_step(
    q: TruncatedNormalMixture, points: np.ndarray, omega: np.ndarray
) -> TruncatedNormalMixture:
    """One weighted EM step on SNIS-weighted points.

    Moments are plain weighted averages (no truncation correction), which
    is accurate while the mass sits inside the box. Starved components
    keep their parameters; weights are floored and renormalized, scales
    floored at SCALE_FLOOR.
    """
    log_comp = _component_log_densities(q, points)
    with np.errstate(divide="ignore"):
        logs = log_comp + np.log(q.weights)[None]
    logs = logs - logs.max(axis=1, keepdims=True)
    resp = np.exp(logs)
    resp /= resp.sum(axis=1, keepdims=True)       # (N, M)

    weighted = omega[:, None] * resp              # (N, M)
    nk = weighted.sum(axis=0)                     # (M,)
    alive = nk > 1e-12

    means = q.means.copy()
    scales = q.scales.copy()
    if alive.any():
        w_alive = weighted[:, alive]
        means[alive] = (w_alive.T @ points) / nk[alive, None]
        centered = points[None] - means[alive][:, None, :]   # (Ma, N, n)
        var = np.einsum("nm,mnd->md", w_alive, centered**2) / nk[alive, None]
        scales[alive] = np.sqrt(var)

    weights = np.maximum(nk, WEIGHT_FLOOR)
    weights /= weights.sum()
    return TruncatedNormalMixture(
        weights=weights,
        means=means,
        scales=np.maximum(scales, SCALE_FLOOR),
    )


def fit_proposal(
    Q,
    init: TruncatedNormalMixture,
    alpha: float,
    cfg: SamplerConfig,
    em_iterations: int,
) -> TruncatedNormalMixture:
    """Fit a mixture to the Boltzmann policy of Q by SNIS-weighted EM.

    Each iteration samples from the current fit blended with a uniform
    guard, weights the draws toward exp(Q/alpha) by self-normalized
    importance sampling, and applies one weighted EM step; this performs
    the forward-KL (weighted maximum likelihood) update without gradient
    machinery. Deterministic given cfg.rng_seed.
    """
    if init.uniform_component:
        raise ValueError("init must be a purely normal mixture")
    seeds = np.random.SeedSequence(cfg.rng_seed).generate_state(em_iterations, np.uint64)
    current = init
    for t in range(em_iterations):
        sampler = _uniform_guard(current)
        points = _sample_with_rng(
            sampler, cfg.sample_count, np.random.default_rng(int(seeds[t]))
        )
        omega = snis_weights(Q, sampler, points, alpha)
        current = _em_step(current, points, omega)
    return current


def gaussian_renyi(mu1: float, mu2: float, sigma: float, b: float) -> float:
    """Order-b Renyi divergence of two equal-variance Gaussians: b (mu1-mu2)^2 / (2 sigma^2)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return 0.5 * b * (mu1 - mu2) ** 2 / sigma**2


def gaussian_gb(mu1: float, mu2: float, sigma: float, b: float) -> float:
    """G_b = (1 - b) * Renyi_b = -log int p1^b p2^(1-b), equal variances.

    Satisfies G_b = 4 b (1 - b) G_{1/2} exactly; the identity breaks for
    unequal variances.
    """
    return (1.0 - b) * gaussian_renyi(mu1, mu2, sigma, b)


def renyi_quadrature(
    mu1: float, sigma1: float, mu2: float, sigma2: float, b: float
) -> float:
    """Numerical order-b Renyi divergence of two (possibly unequal) Gaussians.

    Direct quadrature of (1/(b-1)) log int p1^b p2^(1-b); the independent
    cross-check for the closed forms above. Requires b != 1.
    """
    if b == 1.0:
        raise ValueError("order-1 Renyi (KL) is not supported by this quadrature")

    def integrand(x):
        lp1 = -0.5 * ((x - mu1) / sigma1) ** 2 - np.log(sigma1) - _LOG_SQRT_2PI
        lp2 = -0.5 * ((x - mu2) / sigma2) ** 2 - np.log(sigma2) - _LOG_SQRT_2PI
        return np.exp(b * lp1 + (1.0 - b) * lp2)

    span = 12.0 * max(sigma1, sigma2) + abs(mu1 - mu2)
    lo = min(mu1, mu2) - span
    hi = max(mu1, mu2) + span
    integral, _ = quad(integrand, lo, hi, limit=200)
    return float(np.log(integral) / (b - 1.0))


def mixture_to_json(q: TruncatedNormalMixture) -> str:
    return json.dumps(q.to_json_dict(), sort_keys=True)


def mixture_from_json(text: str) -> TruncatedNormalMixture:
    return TruncatedNormalMixture.from_json_dict(json.loads(text))
