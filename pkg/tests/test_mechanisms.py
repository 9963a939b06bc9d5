import math

import numpy as np
import pytest

from nadp.calibration import PrivacyParams
from nadp.components import build_partition
from nadp.embeddings import EmbeddingSet
from nadp.graph import build_graph, knn
from nadp.mechanisms import (
    MechanismConfig,
    Perturber,
    covariance_shape,
    gaussian_perturb,
    jaccard_mechanism_perturb,
    laplacian_perturb,
    mahalanobis_noise,
    mahalanobis_perturb,
    nadp_perturb,
    word_substream,
)

from oracles import solve_u_quadrature
from synth import random_embeddings


def _pair_set(distance: float, d: int) -> EmbeddingSet:
    vecs = np.zeros((2, d))
    vecs[1, 0] = distance
    return EmbeddingSet(("a", "b"), vecs)


def _pair_partition(emb: EmbeddingSet):
    return build_partition(build_graph(emb, m=1, tau=0.0), emb)


def test_nadp_singleton_component_unchanged():
    # two tight triples plus "mid" halfway between them: mid's top-2 set
    # {a2, b0} shares nothing with a2's or b0's own sets, and mid is in
    # nobody's top-2, so it ends up alone with zero sensitivity
    coords = [0.0, 0.1, 0.2, 50.0, 50.1, 50.2, 25.08]
    names = ("a0", "a1", "a2", "b0", "b1", "b2", "mid")
    emb = EmbeddingSet(names, np.array(coords)[:, None])
    graph = build_graph(emb, m=2, tau=0.3)
    part = build_partition(graph, emb)
    mid = emb.index_of("mid")
    assert part.local_sensitivities[part.assignment[mid]] == 0.0
    assert part.local_sensitivities[part.assignment[0]] > 0.0
    out, report = nadp_perturb(emb, part, PrivacyParams(1.0, 0.05), seed=5)
    assert np.array_equal(out.vector("mid"), emb.vector("mid"))
    assert not np.array_equal(out.vector("a0"), emb.vector("a0"))
    assert report.zero_noise_words == 1


def test_nadp_seed_determinism():
    emb = random_embeddings(12, 4, seed=1)
    part = _noisy_partition(emb)
    params = PrivacyParams(1.0, 0.1)
    out1, _ = nadp_perturb(emb, part, params, seed=99)
    out2, _ = nadp_perturb(emb, part, params, seed=99)
    out3, _ = nadp_perturb(emb, part, params, seed=100)
    assert np.array_equal(out1.vectors, out2.vectors)
    assert not np.array_equal(out1.vectors, out3.vectors)


def _noisy_partition(emb):
    return build_partition(build_graph(emb, m=2, tau=0.0), emb)


def test_nadp_monte_carlo_variance():
    # one two-word component at distance 2; the noise variance must equal
    # (u_star * 2)^2, with u_star checked against the quadrature oracle
    d = 500
    emb = _pair_set(2.0, d)
    part = _pair_partition(emb)
    assert part.local_sensitivities.tolist() == [2.0]
    params = PrivacyParams(1.0, 0.1)
    u_oracle = solve_u_quadrature(1.0, 0.1)
    draws = []
    for seed in range(1000):
        out, report = nadp_perturb(emb, part, params, seed=seed)
        draws.append(out.vectors - emb.vectors)
        assert report.u_star == pytest.approx(u_oracle, rel=1e-9)
    sample = np.concatenate([n.ravel() for n in draws])
    assert sample.size == 10**6
    expected = (u_oracle * 2.0) ** 2
    assert sample.var() == pytest.approx(expected, rel=0.01)


def test_nadp_rejects_mismatched_partition():
    emb = random_embeddings(6, 3, seed=2)
    other = random_embeddings(8, 3, seed=3)
    part = _noisy_partition(other)
    with pytest.raises(ValueError, match="partition"):
        nadp_perturb(emb, part, PrivacyParams(1.0, 0.1), seed=0)


def test_nadp_sigma_monotone_in_sensitivity():
    emb = random_embeddings(40, 4, seed=4)
    part = build_partition(build_graph(emb, m=2, tau=0.1), emb)
    _, report = nadp_perturb(emb, part, PrivacyParams(1.0, 0.05), seed=0)
    deltas = np.array(report.delta_per_component)
    sigmas = np.array(report.sigma_per_component)
    order = np.argsort(deltas)
    assert np.all(np.diff(sigmas[order]) >= 0)


def test_gaussian_zero_sensitivity_is_identity():
    emb = random_embeddings(5, 3, seed=5)
    out, report = gaussian_perturb(emb, PrivacyParams(0.5, 0.1), 0.0, seed=1)
    assert np.array_equal(out.vectors, emb.vectors)
    assert report.zero_noise_words == 5


def test_gaussian_monte_carlo_variance():
    d = 500
    emb = _pair_set(1.0, d)
    params = PrivacyParams(0.5, 0.1)
    sigma = math.sqrt(2.0 * math.log(1.25 / 0.1)) / 0.5
    noises = []
    for seed in range(1000):
        out, report = gaussian_perturb(emb, params, 1.0, seed=seed)
        assert report.sigma_per_component[0] == pytest.approx(sigma, rel=1e-12)
        noises.append(out.vectors - emb.vectors)
    sample = np.concatenate([n.ravel() for n in noises])
    assert sample.var() == pytest.approx(sigma**2, rel=0.01)


def test_gaussian_seed_contract():
    emb = random_embeddings(6, 4, seed=6)
    params = PrivacyParams(0.5, 0.1)
    a, _ = gaussian_perturb(emb, params, 1.0, seed=1)
    b, _ = gaussian_perturb(emb, params, 1.0, seed=2)
    assert not np.array_equal(a.vectors, b.vectors)


def test_gaussian_epsilon_range():
    emb = random_embeddings(4, 2, seed=7)
    with pytest.raises(ValueError, match="proven only"):
        gaussian_perturb(emb, PrivacyParams(1.5, 0.1), 1.0, seed=0)
    out, report = gaussian_perturb(
        emb, PrivacyParams(1.5, 0.1), 1.0, seed=0, strict=False
    )
    assert not report.proven_dp
    assert out.vectors.shape == emb.vectors.shape


def test_laplace_monte_carlo_variance():
    # per-coordinate Laplace of scale b has variance 2 b^2
    d = 500
    emb = _pair_set(1.0, d)
    Delta, eps = 3.0, 1.5
    noises = []
    for seed in range(1000):
        out, _ = laplacian_perturb(emb, eps, Delta, seed=seed)
        noises.append(out.vectors - emb.vectors)
    sample = np.concatenate([n.ravel() for n in noises])
    assert sample.var() == pytest.approx(2.0 * (Delta / eps) ** 2, rel=0.02)


def test_laplace_identity_and_validation():
    emb = random_embeddings(4, 3, seed=8)
    out, _ = laplacian_perturb(emb, 1.0, 0.0, seed=3)
    assert np.array_equal(out.vectors, emb.vectors)
    with pytest.raises(ValueError):
        laplacian_perturb(emb, 0.0, 1.0, seed=3)
    a, _ = laplacian_perturb(emb, 1.0, 1.0, seed=3)
    b, _ = laplacian_perturb(emb, 1.0, 1.0, seed=3)
    assert np.array_equal(a.vectors, b.vectors)


def test_covariance_shape_trace():
    emb = random_embeddings(50, 8, seed=9)
    for lam in (0.0, 0.3, 1.0):
        shape = covariance_shape(emb, lam)
        assert np.trace(shape) == pytest.approx(emb.d, rel=1e-12)


def test_mahalanobis_spherical_norm_mean():
    # lambda = 0 collapses to spherical noise whose radius is Gamma(d, 1/eps)
    d, eps = 20, 2.0
    rng = np.random.default_rng(12345)
    eye = np.eye(d)
    norms = np.empty(10**6)
    for i in range(norms.size):
        norms[i] = np.linalg.norm(mahalanobis_noise(rng, eye, eps))
    assert norms.mean() == pytest.approx(d / eps, rel=0.02)


def test_mahalanobis_anisotropic_covariance():
    # with lambda = 1 the empirical noise covariance is proportional to the
    # trace-normalised data covariance: E[z z^T] = (d+1)/eps^2 * C
    rng = np.random.default_rng(77)
    d, n, eps = 10, 400, 1.0
    stretch = np.linspace(1.0, 4.0, d)
    data = rng.normal(0.0, 1.0, (n, d)) * stretch
    emb = EmbeddingSet(tuple(f"w{i}" for i in range(n)), data)
    shape = covariance_shape(emb, 1.0)
    w, v = np.linalg.eigh(shape)
    shape_sqrt = (v * np.sqrt(np.clip(w, 0, None))) @ v.T
    draws = np.empty((200_000, d))
    sample_rng = np.random.default_rng(11)
    for i in range(draws.shape[0]):
        draws[i] = mahalanobis_noise(sample_rng, shape_sqrt, eps)
    empirical = np.cov(draws, rowvar=False)
    expected = (d + 1) / eps**2 * shape
    err = np.linalg.norm(empirical - expected) / np.linalg.norm(expected)
    assert err < 0.05


def test_mahalanobis_perturb_api():
    emb = random_embeddings(30, 5, seed=10)
    out, report = mahalanobis_perturb(emb, epsilon=5.0, lambda_=1.0, seed=4)
    assert out.words == emb.words
    assert not np.array_equal(out.vectors, emb.vectors)
    again, _ = mahalanobis_perturb(emb, epsilon=5.0, lambda_=1.0, seed=4)
    assert np.array_equal(out.vectors, again.vectors)
    with pytest.raises(ValueError):
        mahalanobis_perturb(emb, epsilon=0.0, lambda_=1.0, seed=4)
    with pytest.raises(ValueError):
        mahalanobis_perturb(emb, epsilon=1.0, lambda_=2.0, seed=4)
    single = EmbeddingSet(("only",), np.ones((1, 3)))
    with pytest.raises(ValueError, match="covariance"):
        mahalanobis_perturb(single, epsilon=1.0, lambda_=1.0, seed=4)


def _jaccard_config(eps, delta, **kwargs):
    return MechanismConfig(
        kind="jaccard", params=PrivacyParams(eps, delta), seed=0, **kwargs
    )


def test_jaccard_all_identical_vectors_is_identity():
    # every density is 0 (all dense) and the sensitivity is 0, so no noise
    emb = EmbeddingSet(("a", "b", "c"), np.ones((3, 4)) * 2.5)
    ns = knn(emb, 2)
    config = _jaccard_config(0.5, 0.1)
    out, report = jaccard_mechanism_perturb(
        emb, PrivacyParams(0.5, 0.1), ns, config, seed=1
    )
    assert np.array_equal(out.vectors, emb.vectors)
    assert report.zero_noise_words == 3
    assert report.extra["dense_words"] == 3


def test_jaccard_single_category_collapse():
    emb = random_embeddings(10, 4, seed=11)
    ns = knn(emb, 3)
    # eta0 below every density: everything lands in the sparse bin
    config = _jaccard_config(0.5, 0.1, eta0=1e-9)
    out, report = jaccard_mechanism_perturb(
        emb, PrivacyParams(0.5, 0.1), ns, config, seed=2
    )
    assert report.extra["dense_words"] == 0
    assert report.extra["sparse_words"] == 10
    Delta = report.global_sensitivity
    expected = 1.276 * Delta * math.sqrt(2 * math.log(1.25 / 0.1)) / 0.5
    assert report.sigma_per_component[1] == pytest.approx(expected, rel=1e-12)


def test_jaccard_two_cluster_category_variances():
    # one tight and one loose cluster with eta0 between the density ranges
    d = 350
    rng = np.random.default_rng(13)
    tight = rng.normal(0.0, 0.01, (3, d))
    loose = rng.normal(40.0, 4.0, (3, d))
    emb = EmbeddingSet(tuple(f"w{i}" for i in range(6)), np.vstack([tight, loose]))
    ns = knn(emb, 2)
    eta = ns.distances.mean(axis=1)
    eta0 = float((eta[:3].max() + eta[3:].min()) / 2)
    params = PrivacyParams(0.9, 0.1)
    config = _jaccard_config(0.9, 0.1, eta0=eta0)
    dense_noise, sparse_noise = [], []
    for seed in range(1000):
        out, report = jaccard_mechanism_perturb(emb, params, ns, config, seed=seed)
        noise = out.vectors - emb.vectors
        dense_noise.append(noise[:3].ravel())
        sparse_noise.append(noise[3:].ravel())
    assert report.extra["dense_words"] == 3
    assert report.extra["sparse_words"] == 3
    sigma1, sigma2 = report.sigma_per_component
    dense = np.concatenate(dense_noise)
    sparse = np.concatenate(sparse_noise)
    assert dense.size >= 10**6 and sparse.size >= 10**6
    assert dense.var() == pytest.approx(sigma1**2, rel=0.01)
    assert sparse.var() == pytest.approx(sigma2**2, rel=0.01)


def test_jaccard_epsilon_range():
    emb = random_embeddings(6, 3, seed=14)
    ns = knn(emb, 2)
    config = _jaccard_config(2.0, 0.1)
    with pytest.raises(ValueError, match="proven only"):
        jaccard_mechanism_perturb(emb, PrivacyParams(2.0, 0.1), ns, config, seed=0)
    _, report = jaccard_mechanism_perturb(
        emb, PrivacyParams(2.0, 0.1), ns, config, seed=0, strict=False
    )
    assert not report.proven_dp


def test_mechanism_config_validation():
    params = PrivacyParams(1.0, 0.1)
    with pytest.raises(ValueError):
        MechanismConfig(kind="bogus", params=params, seed=0)
    with pytest.raises(ValueError):
        MechanismConfig(kind="nadp", params=params, seed=0, lambda_=1.5)
    with pytest.raises(ValueError):
        MechanismConfig(kind="nadp", params=params, seed=0, eta0=0.0)
    with pytest.raises(ValueError):
        MechanismConfig(kind="nadp", params=params, seed=0, alpha1=-1.0)


def test_word_substream_is_order_independent():
    # noise is keyed by (seed, word index) alone: the same word draws the
    # same noise no matter what else is in the set
    emb3 = random_embeddings(3, 4, seed=15)
    emb2 = EmbeddingSet(emb3.words[:2], emb3.vectors[:2])
    params = PrivacyParams(0.5, 0.1)
    out3, _ = gaussian_perturb(emb3, params, 1.0, seed=42)
    out2, _ = gaussian_perturb(emb2, params, 1.0, seed=42)
    assert np.array_equal(out3.vectors[:2], out2.vectors)


def test_word_substreams_are_distinct():
    a = word_substream(7, 0).normal(size=4)
    b = word_substream(7, 1).normal(size=4)
    assert not np.array_equal(a, b)


def test_shape_and_token_preservation_all_mechanisms():
    emb = random_embeddings(15, 6, seed=16)
    perturber = Perturber(emb, delta=0.05, m=2, tau=0.1, m_density=3, strict=False)
    for kind in ("nadp", "gaussian", "laplacian", "mahalanobis", "jaccard"):
        out, report = perturber.perturb(kind, 0.8, seed=21)
        assert out.words == emb.words
        assert out.vectors.shape == emb.vectors.shape
        assert report.kind == kind
        again, _ = perturber.perturb(kind, 0.8, seed=21)
        assert np.array_equal(out.vectors, again.vectors)
