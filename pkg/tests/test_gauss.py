import numpy as np
import pytest
from scipy.special import erf, ndtr
from scipy.stats import chisquare, truncnorm

from entropic_compose.gauss import (
    QuadraticQ,
    SamplerConfig,
    TruncatedNormalMixture,
    fit_proposal,
    gaussian_gb,
    gaussian_renyi,
    mixture_from_json,
    mixture_log_density,
    mixture_mean,
    mixture_power_product,
    mixture_sample,
    mixture_to_json,
    renyi_quadrature,
    sir_policy_sample,
    snis_log_partition,
    snis_weights,
    transfer_proposal,
)

LOG_Z_ERF = float(np.log(np.sqrt(np.pi) * erf(1.0)))  # int_-1^1 exp(-a^2) da


def wide_proposal(dim=1):
    return TruncatedNormalMixture.single(np.zeros(dim), np.full(dim, 10.0))


def test_log_density_flat_limit():
    q = TruncatedNormalMixture.single([0.0, 0.0], [1e5, 1e5])
    ld = mixture_log_density(q, np.array([0.3, -0.7]))
    assert ld == pytest.approx(-2 * np.log(2.0), abs=1e-8)


def test_log_density_outside_box():
    q = TruncatedNormalMixture.single([0.0], [1.0])
    assert mixture_log_density(q, np.array([1.5])) == -np.inf


def test_log_density_standard_normal_at_zero():
    q = TruncatedNormalMixture.single([0.0], [1.0])
    phi0 = 1.0 / np.sqrt(2 * np.pi)
    expected = np.log(phi0 / (ndtr(1.0) - ndtr(-1.0)))
    assert mixture_log_density(q, np.array([0.0])) == pytest.approx(expected, abs=1e-12)
    # 0.39894 / 0.68269 ~ 0.58434
    assert np.exp(expected) == pytest.approx(0.58434, abs=1e-4)


@pytest.mark.parametrize("dim", [1, 2])
def test_density_normalizes_on_grid(dim):
    rng = np.random.default_rng(4)
    q = TruncatedNormalMixture(
        weights=np.array([0.3, 0.5, 0.2]),
        means=rng.uniform(-0.7, 0.7, size=(2, dim)),
        scales=rng.uniform(0.2, 1.5, size=(2, dim)),
        uniform_component=True,
    )
    grid = np.linspace(-1, 1, 801)
    if dim == 1:
        dens = np.exp(mixture_log_density(q, grid[:, None]))
        total = np.trapezoid(dens, grid)
    else:
        xx, yy = np.meshgrid(grid, grid)
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        dens = np.exp(mixture_log_density(q, pts)).reshape(xx.shape)
        total = np.trapezoid(np.trapezoid(dens, grid, axis=1), grid)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_sampling_deterministic_and_in_box():
    q = TruncatedNormalMixture(
        weights=np.array([0.6, 0.4]),
        means=np.array([[0.5, -0.5], [-0.3, 0.3]]),
        scales=np.array([[0.4, 0.8], [1.5, 0.2]]),
    )
    cfg = SamplerConfig(sample_count=5000, rng_seed=123)
    a = mixture_sample(q, cfg)
    b = mixture_sample(q, cfg)
    assert np.array_equal(a, b)
    assert np.all(a >= -1.0) and np.all(a < 1.0)


def test_sampling_mean_clt_bound():
    q = TruncatedNormalMixture.single([0.0, 0.0], [0.5, 0.5])
    n = 100_000
    pts = mixture_sample(q, SamplerConfig(sample_count=n, rng_seed=7))
    bound = 3 * 0.5 / np.sqrt(n)
    assert np.all(np.abs(pts.mean(axis=0)) < bound)


def test_power_product_single_components():
    qi = TruncatedNormalMixture.single([0.0], [1.0])
    qj = TruncatedNormalMixture.single([1.0], [1.0])
    prod = mixture_power_product(qi, qj, 0.5)
    assert prod.num_components == 1
    assert prod.means[0, 0] == 0.5
    assert prod.scales[0, 0] == 1.0
    assert prod.weights[0] == 1.0


def test_power_product_endpoint_returns_qi():
    rng = np.random.default_rng(9)
    qi = TruncatedNormalMixture(
        weights=np.array([0.7, 0.3]),
        means=rng.uniform(-0.5, 0.5, (2, 2)),
        scales=rng.uniform(0.3, 1.0, (2, 2)),
    )
    qj = TruncatedNormalMixture.single([0.9, -0.9], [0.2, 0.2])
    prod = mixture_power_product(qi, qj, 1.0)
    assert np.allclose(prod.means, qi.means, rtol=1e-15, atol=0)
    assert np.allclose(prod.scales, qi.scales, rtol=1e-15, atol=0)
    assert np.allclose(prod.weights, qi.weights, atol=1e-14)


def _untruncated_log_density(mean, scale, x):
    z = (x - mean) / scale
    return -0.5 * z * z - np.log(scale) - 0.5 * np.log(2 * np.pi)


def test_power_product_pointwise_identity():
    qi = TruncatedNormalMixture.single([0.2], [0.7])
    qj = TruncatedNormalMixture.single([-0.4], [1.3])
    b = 0.3
    prod = mixture_power_product(qi, qj, b)
    grid = np.linspace(-1, 1, 101)
    lhs = _untruncated_log_density(prod.means[0, 0], prod.scales[0, 0], grid)
    rhs = b * _untruncated_log_density(0.2, 0.7, grid) + (1 - b) * _untruncated_log_density(
        -0.4, 1.3, grid
    )
    shift = lhs[50] - rhs[50]
    assert np.max(np.abs(lhs - rhs - shift)) <= 1e-9


def test_power_product_identical_inputs_half():
    q = TruncatedNormalMixture.single([0.1], [0.6])
    prod = mixture_power_product(q, q, 0.5)
    grid = np.linspace(-0.99, 0.99, 201)[:, None]
    assert np.max(
        np.abs(mixture_log_density(prod, grid) - mixture_log_density(q, grid))
    ) <= 1e-9


def test_power_product_rejects_mismatch():
    qi = TruncatedNormalMixture.single([0.0], [1.0])
    qj = TruncatedNormalMixture.single([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        mixture_power_product(qi, qj, 0.5)


def test_snis_log_partition_flat_q():
    for dim in (1, 2):
        q = wide_proposal(dim)
        est = snis_log_partition(
            lambda a: np.zeros(a.shape[0]), q, 1.0, SamplerConfig(100_000, 11)
        )
        assert est == pytest.approx(dim * np.log(2.0), abs=0.01)


def test_snis_log_partition_erf_oracle():
    quad = QuadraticQ(center=[0.0], scale=[1.0 / np.sqrt(2.0)])
    est = snis_log_partition(quad, wide_proposal(), 1.0, SamplerConfig(100_000, 3))
    assert LOG_Z_ERF == pytest.approx(0.4012216, abs=1e-6)
    assert est == pytest.approx(LOG_Z_ERF, abs=0.01)


def test_snis_log_partition_zero_variance_case():
    # Proposal equal to the normalized Boltzmann makes every weight constant.
    quad = QuadraticQ(center=[0.0], scale=[1.0 / np.sqrt(2.0)])
    boltzmann = TruncatedNormalMixture.single([0.0], [1.0 / np.sqrt(2.0)])
    for n in (1, 7, 100):
        est = snis_log_partition(quad, boltzmann, 1.0, SamplerConfig(n, 5))
        assert est == pytest.approx(LOG_Z_ERF, abs=1e-12)


def test_snis_log_partition_bias_shrinks_with_n():
    quad = QuadraticQ(center=[0.0], scale=[1.0 / np.sqrt(2.0)])
    q = wide_proposal()
    errs = {}
    for n in (100, 100_000):
        errs[n] = np.median(
            [
                abs(snis_log_partition(quad, q, 1.0, SamplerConfig(n, seed)) - LOG_Z_ERF)
                for seed in range(20)
            ]
        )
    assert errs[100_000] < errs[100]
    assert errs[100_000] <= 0.01


def test_snis_weights_uniform_case():
    q = TruncatedNormalMixture.single([0.0], [1e6])  # effectively uniform
    pts = mixture_sample(q, SamplerConfig(64, 2))
    w = snis_weights(lambda a: np.full(a.shape[0], 3.3), q, pts, 1.0)
    assert np.allclose(w, 1.0 / 64, atol=1e-9)
    assert abs(w.sum() - 1.0) <= 1e-14


def test_snis_weights_shift_invariant():
    q = wide_proposal()
    pts = mixture_sample(q, SamplerConfig(257, 8))
    f = lambda a: -np.sum(a**2, axis=1)
    w1 = snis_weights(f, q, pts, 0.7)
    w2 = snis_weights(lambda a: f(a) + 123.4, q, pts, 0.7)
    assert np.allclose(w1, w2, atol=1e-12)


def test_snis_weights_two_point_ratio():
    # Q/alpha - log q values of (0, ln 3) must weight 1:3.
    q = TruncatedNormalMixture.single([0.0], [1e6])
    pts = np.array([[0.0], [0.5]])
    logq = mixture_log_density(q, pts)

    def f(a):
        out = np.where(a[:, 0] == 0.0, logq[0], logq[1] + np.log(3.0))
        return out

    w = snis_weights(f, q, pts, 1.0)
    assert np.allclose(w, [0.25, 0.75], atol=1e-12)


def test_snis_weights_permutation_equivariant():
    q = wide_proposal()
    pts = mixture_sample(q, SamplerConfig(50, 21))
    f = lambda a: np.sin(3 * a[:, 0])
    w = snis_weights(f, q, pts, 1.0)
    perm = np.random.default_rng(0).permutation(50)
    w_perm = snis_weights(f, q, pts[perm], 1.0)
    assert np.allclose(w[perm], w_perm, atol=1e-14)


def test_fit_proposal_recovers_target_mean():
    target = QuadraticQ(center=[0.3], scale=[0.2])
    init = TruncatedNormalMixture(
        weights=np.full(4, 0.25),
        means=np.array([[-0.8], [-0.3], [0.1], [0.7]]),
        scales=np.full((4, 1), 0.4),
    )
    fitted = fit_proposal(target, init, 1.0, SamplerConfig(100_000, 17), 20)
    true_mean = truncnorm.mean(
        (-1 - 0.3) / 0.2, (1 - 0.3) / 0.2, loc=0.3, scale=0.2
    )
    assert abs(mixture_mean(fitted)[0] - true_mean) <= 0.02


def test_fit_proposal_forward_kl_non_increasing():
    target = QuadraticQ(center=[-0.2], scale=[0.3])
    init = TruncatedNormalMixture(
        weights=np.array([0.5, 0.5]),
        means=np.array([[-0.6], [0.6]]),
        scales=np.full((2, 1), 0.5),
    )
    # Fixed evaluation sample: wide proposal, SNIS-weighted toward the target.
    q_eval = wide_proposal()
    pts = mixture_sample(q_eval, SamplerConfig(100_000, 99))
    omega = snis_weights(target, q_eval, pts, 1.0)
    cfg = SamplerConfig(100_000, 31)
    scores = []
    for iters in range(1, 6):
        fitted = fit_proposal(target, init, 1.0, cfg, iters)
        scores.append(-float(omega @ mixture_log_density(fitted, pts)))
    for prev, nxt in zip(scores, scores[1:]):
        assert nxt <= prev + 0.01


def test_fit_proposal_fixed_point():
    target = QuadraticQ(center=[0.1], scale=[0.25])
    init = TruncatedNormalMixture.single([0.1], [0.25])
    fitted = fit_proposal(target, init, 1.0, SamplerConfig(100_000, 13), 1)
    assert abs(fitted.means[0, 0] - 0.1) < 0.01
    assert abs(fitted.scales[0, 0] - 0.25) < 0.01


def test_transfer_proposal_structure():
    rng = np.random.default_rng(6)
    qi = TruncatedNormalMixture(
        weights=np.array([0.5, 0.5]),
        means=rng.uniform(-0.5, 0.5, (2, 1)),
        scales=rng.uniform(0.2, 0.6, (2, 1)),
    )
    qj = TruncatedNormalMixture.single([0.4], [0.3])
    p = transfer_proposal(qi, qj, 0.5)
    assert p.num_components == 2 + 1 + 2 * 1 + 1
    assert p.uniform_component

    grid = np.linspace(-0.999, 0.999, 401)[:, None]
    dens = np.exp(mixture_log_density(p, grid))
    assert np.all(dens >= 0.25 * 0.5 - 1e-12)  # quarter of the uniform 2^-1

    # Density assembles from the four blocks.
    prod = mixture_power_product(qi, qj, 0.5)
    parts = (
        0.25 * np.exp(mixture_log_density(qi, grid))
        + 0.25 * np.exp(mixture_log_density(qj, grid))
        + 0.25 * np.exp(mixture_log_density(prod, grid))
        + 0.25 * 0.5
    )
    assert np.max(np.abs(dens - parts)) <= 1e-12


def test_sir_degenerate_weights_match_proposal():
    # With the proposal equal to the Boltzmann policy, every importance
    # weight is constant and SIR output is distributed as the proposal.
    quad = QuadraticQ(center=[0.2], scale=[0.5])
    q = TruncatedNormalMixture.single([0.2], [0.5])
    draws = np.array(
        [
            sir_policy_sample(quad, q, 1.0, SamplerConfig(50, seed))[0]
            for seed in range(10_000)
        ]
    )
    edges = np.linspace(-1, 1, 21)
    lo, hi = (-1 - 0.2) / 0.5, (1 - 0.2) / 0.5
    cdf = truncnorm.cdf((edges - 0.2) / 0.5, lo, hi)
    expected = np.diff(cdf) * draws.size
    observed, _ = np.histogram(draws, bins=edges)
    assert chisquare(observed, expected).pvalue > 0.001


def test_sir_constant_q_targets_uniform():
    # Constant Q defines the uniform Boltzmann policy: the 1/q importance
    # weights undo the proposal no matter how peaked it is.
    q = TruncatedNormalMixture.single([0.2], [0.5])
    flat = lambda a: np.zeros(a.shape[0])
    draws = np.array(
        [
            sir_policy_sample(flat, q, 1.0, SamplerConfig(200, seed))[0]
            for seed in range(10_000)
        ]
    )
    observed, _ = np.histogram(draws, bins=np.linspace(-1, 1, 21))
    expected = np.full(20, draws.size / 20)
    assert chisquare(observed, expected).pvalue > 0.001


def test_sir_consistency_with_boltzmann_moments():
    quad = QuadraticQ(center=[0.3], scale=[0.4])
    alpha = 1.0
    proposal = wide_proposal()
    draws = np.array(
        [
            sir_policy_sample(quad, proposal, alpha, SamplerConfig(1000, seed))[0]
            for seed in range(10_000)
        ]
    )
    sd = 0.4 * np.sqrt(alpha)
    true_mean = truncnorm.mean((-1 - 0.3) / sd, (1 - 0.3) / sd, loc=0.3, scale=sd)
    assert abs(draws.mean() - true_mean) <= 0.02
    assert np.all(draws >= -1.0) and np.all(draws < 1.0)


def test_sir_single_sample_returns_proposal_draw():
    q = TruncatedNormalMixture.single([0.0], [0.5])
    cfg = SamplerConfig(1, 42)
    point = sir_policy_sample(lambda a: -100.0 * a[:, 0] ** 2, q, 1.0, cfg)
    assert np.array_equal(point, mixture_sample(q, cfg)[0])


def test_gaussian_renyi_closed_form():
    assert gaussian_renyi(0.7, 0.7, 1.3, 0.4) == 0.0
    assert gaussian_renyi(0.0, 1.0, 1.0, 0.5) == pytest.approx(0.25, abs=1e-15)


def test_gaussian_renyi_matches_quadrature():
    for b in (0.2, 0.5, 0.8):
        closed = gaussian_renyi(0.3, -0.5, 0.9, b)
        numeric = renyi_quadrature(0.3, 0.9, -0.5, 0.9, b)
        assert abs(closed - numeric) <= 1e-6


def test_gb_scaling_identity():
    g_half = gaussian_gb(0.2, -0.6, 0.7, 0.5)
    for b in np.arange(0.1, 0.95, 0.1):
        gb = gaussian_gb(0.2, -0.6, 0.7, b)
        assert gb == pytest.approx(4 * b * (1 - b) * g_half, rel=1e-12)
    assert gaussian_gb(0.2, -0.6, 0.7, 0.0) == 0.0
    assert gaussian_gb(0.2, -0.6, 0.7, 1.0) == 0.0


def test_gb_scaling_fails_for_unequal_variances():
    # The rescaling heuristic assumes equal variances; document the breakage.
    mu1, s1, mu2, s2 = 0.0, 1.0, 1.0, 2.0
    g_half = (1 - 0.5) * renyi_quadrature(mu1, s1, mu2, s2, 0.5)
    b = 0.2
    gb = (1 - b) * renyi_quadrature(mu1, s1, mu2, s2, b)
    assert abs(gb - 4 * b * (1 - b) * g_half) > 1e-3


def test_mixture_json_round_trip():
    q = TruncatedNormalMixture(
        weights=np.array([0.2, 0.3, 0.5]),
        means=np.array([[0.1, -0.2], [0.4, 0.0]]),
        scales=np.array([[0.5, 0.6], [0.7, 0.8]]),
        uniform_component=True,
    )
    back = mixture_from_json(mixture_to_json(q))
    assert np.array_equal(back.weights, q.weights)
    assert np.array_equal(back.means, q.means)
    assert np.array_equal(back.scales, q.scales)
    assert back.uniform_component


def test_mixture_validation():
    with pytest.raises(ValueError):
        TruncatedNormalMixture(np.array([0.5, 0.4]), np.zeros((2, 1)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        TruncatedNormalMixture(np.array([1.0]), np.zeros((1, 1)), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        SamplerConfig(0)
