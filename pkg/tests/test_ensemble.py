import json

import numpy as np
import pytest

from ellspec import ensemble
from ellspec.errors import ProfileError


def test_constant_profile_independent_case():
    p = ensemble.constant_profiles(4, 0.0)
    assert np.array_equal(p.s, np.full((4, 4), 0.25))
    assert np.array_equal(p.t, np.zeros((4, 4)))
    assert p.rho_bound == 0.0


def test_constant_profile_direct_construction():
    p = ensemble.constant_profiles(2, 0.5)
    assert np.allclose(p.s, 0.5)
    assert np.allclose(p.t, 0.25)


def test_constant_profile_saturates_bound():
    p = ensemble.constant_profiles(100, 0.5j)
    assert np.allclose(np.abs(p.t), 0.005)
    assert np.allclose(np.abs(p.t), p.rho_bound * np.sqrt(p.s * p.s.T))


def test_constant_profile_rejects_hermitian_limit():
    with pytest.raises(ProfileError):
        ensemble.constant_profiles(10, 1.0)
    with pytest.raises(ProfileError):
        ensemble.constant_profiles(10, -1.000001)


def test_profile_structural_validation():
    with pytest.raises(ProfileError):
        ensemble.CorrelationProfile(s=-np.ones((3, 3)), t=np.zeros((3, 3)),
                                    rho_bound=0.5)
    with pytest.raises(ProfileError):
        t = np.zeros((3, 3), dtype=complex)
        t[0, 1] = 0.1  # not symmetric
        ensemble.CorrelationProfile(s=np.ones((3, 3)), t=t, rho_bound=0.5)


def test_validate_constant_profile():
    p = ensemble.constant_profiles(10, 0.5)
    rep = ensemble.validate_profile(p, primitivity_l=1)
    assert rep.rho_hat == pytest.approx(0.5, abs=1e-14)
    # constant S has (S^L)_ij = 1/N for every L
    assert rep.c0_s == pytest.approx(1.0, abs=1e-12)
    assert rep.c0_ss == pytest.approx(1.0, abs=1e-12)
    assert rep.ok


def test_validate_zero_row_fails_primitivity():
    s = np.full((6, 6), 1.0 / 6)
    s[2, :] = 0.0  # index 2 unreachable
    p = ensemble.CorrelationProfile(s=s, t=np.zeros((6, 6)), rho_bound=0.0)
    for ell in (1, 2, 4, 8):
        rep = ensemble.validate_profile(p, primitivity_l=ell)
        assert rep.c0_s == 0.0
        assert not rep.passes_primitivity


def test_validate_flags_correlation_violation():
    n = 5
    s = np.full((n, n), 1.0 / n)
    t = np.zeros((n, n), dtype=complex)
    t[0, 1] = t[1, 0] = 1.1 * np.sqrt(s[0, 1] * s[1, 0])
    p = ensemble.CorrelationProfile(s=s, t=t, rho_bound=0.9)
    rep = ensemble.validate_profile(p)
    assert rep.rho_hat == pytest.approx(1.1, abs=1e-12)
    assert not rep.passes_nonhermitian


def test_seed_determinism():
    params = ensemble.EllipticParams(n=40, rho=0.3 + 0.1j)
    a = ensemble.sample_elliptic(params, seed=123)
    b = ensemble.sample_elliptic(params, seed=123)
    assert np.array_equal(a.x, b.x)
    c = ensemble.sample_elliptic(params, seed=124)
    assert not np.array_equal(a.x, c.x)


def test_replica_spawn_keys_are_independent_streams():
    params = ensemble.EllipticParams(n=16, rho=0.0)
    a = ensemble.sample_elliptic(params, seed=5, spawn_key=(0,))
    b = ensemble.sample_elliptic(params, seed=5, spawn_key=(1,))
    assert not np.array_equal(a.x, b.x)


def test_constant_profile_sampler_matches_elliptic_sampler():
    # same moments, same stream: the two entry points must coincide exactly
    n, rho, seed = 30, 0.4 + 0.2j, 99
    a = ensemble.sample_elliptic(ensemble.EllipticParams(n=n, rho=rho), seed)
    p = ensemble.constant_profiles(n, rho)
    b = ensemble.sample_elliptic_type(p, seed)
    assert np.array_equal(a.x, b.x)


def test_fully_symmetric_sample_is_hermitian():
    params = ensemble.EllipticParams(n=50, rho=1.0)
    m = ensemble.sample_elliptic(params, seed=7)
    assert np.array_equal(m.x, m.x.conj().T)


def test_unit_modulus_complex_rho_pairs_are_deterministic():
    # |rho| = 1 with a phase: x_ji = e^{i theta} conj(x_ij) exactly
    rho = np.exp(0.7j)
    m = ensemble.sample_elliptic(ensemble.EllipticParams(n=30, rho=rho), seed=3)
    iu, ju = np.triu_indices(30, k=1)
    assert np.allclose(m.x[ju, iu], rho * np.conj(m.x[iu, ju]), atol=1e-15)


def _pair_moment(rho, n, seed, gaussian=True):
    m = ensemble.sample_elliptic(
        ensemble.EllipticParams(n=n, rho=rho, gaussian=gaussian), seed)
    iu, ju = np.triu_indices(n, k=1)
    prods = m.x[iu, ju] * m.x[ju, iu] * n
    return prods.mean(), len(prods)


def test_moment_oracle_uncorrelated():
    # CLT band at 4 sigma: each n*x_ij*x_ji has unit variance scale
    mean, r = _pair_moment(0.0, 160, seed=11)
    assert r > 10_000
    assert abs(mean) < 4.0 / np.sqrt(r)


def test_moment_oracle_correlated():
    mean, r = _pair_moment(0.5, 500, seed=12)
    assert abs(mean - 0.5) < 4.0 / np.sqrt(r)


def test_moment_oracle_bernoulli_surrogate():
    mean, r = _pair_moment(0.5, 500, seed=13, gaussian=False)
    assert abs(mean - 0.5) < 4.0 / np.sqrt(r)


def test_variance_moments_per_entry():
    n = 500
    m = ensemble.sample_elliptic(ensemble.EllipticParams(n=n, rho=0.3), seed=21)
    iu, ju = np.triu_indices(n, k=1)
    sq = np.abs(m.x[iu, ju]) ** 2 * n
    # |x|^2 for a proper complex Gaussian has variance equal to its mean^2
    assert abs(sq.mean() - 1.0) < 4.0 / np.sqrt(len(sq))


def test_block_profile_variances():
    n = 200
    half = n // 2
    s = np.full((n, n), 1.0 / n)
    s[:half, half:] = 2.0 / n
    s[half:, :half] = 2.0 / n
    p = ensemble.CorrelationProfile(s=s, t=np.zeros((n, n)), rho_bound=0.0)
    m = ensemble.sample_elliptic_type(p, seed=17)
    iu, ju = np.triu_indices(n, k=1)
    vals = np.abs(m.x[iu, ju]) ** 2 * n
    target = s[iu, ju] * n
    for cls in (1.0, 2.0):
        sel = target == cls
        r = int(sel.sum())
        assert r > 9000
        assert abs(vals[sel].mean() - cls) < 4.0 * cls / np.sqrt(r)


def test_exact_second_moments_by_sign_enumeration(monkeypatch):
    """The Bernoulli surrogate is linear in four Rademacher factors, so
    averaging over all 16 sign patterns gives the exact second moments of
    the pair construction (the 'symbolic' check at n = 2)."""
    rho = 0.5
    p = ensemble.constant_profiles(2, rho)
    patterns = [np.array([(k >> i) & 1 for i in range(4)]) for k in range(16)]
    samples = []

    class StubRng:
        def __init__(self, bits):
            self.bits = bits

        def integers(self, lo, hi, size):
            total = int(np.prod(size))
            out = np.resize(self.bits, total).reshape(size)
            return out

        def standard_normal(self, size):  # pragma: no cover - not used
            raise AssertionError("gaussian path should not be hit")

    for bits in patterns:
        monkeypatch.setattr(ensemble, "_rng_for",
                            lambda seed, spawn_key=(), b=bits: StubRng(b))
        samples.append(ensemble.sample_elliptic_type(p, 0, gaussian=False).x)
    xs = np.array(samples)
    pair_cov = (xs[:, 0, 1] * xs[:, 1, 0]).mean()
    var01 = (np.abs(xs[:, 0, 1]) ** 2).mean()
    assert pair_cov == pytest.approx(rho / 2, abs=1e-15)
    assert var01 == pytest.approx(1 / 2, abs=1e-15)


def test_rejects_inconsistent_pair_covariance():
    n = 4
    s = np.full((n, n), 1.0 / n)
    s[0, 1] = 0.0
    t = np.full((n, n), 0.1 / n, dtype=complex)
    p = ensemble.CorrelationProfile(s=s, t=t, rho_bound=0.9)
    with pytest.raises(ProfileError):
        ensemble.sample_elliptic_type(p, 0)


def test_profile_json_roundtrip():
    p = ensemble.constant_profiles(6, 0.3 + 0.2j, tag="demo")
    q = ensemble.profile_from_json(ensemble.profile_to_json(p))
    assert q.n == p.n
    assert np.allclose(q.s, p.s)
    assert np.allclose(q.t, p.t)
    assert q.rho_bound == p.rho_bound


def test_profile_json_constant_shorthand():
    doc = {"n": 3, "s": {"kind": "constant", "value": 1 / 3},
           "t": {"kind": "constant", "value": [0.1, 0.05]},
           "rho_bound": 0.4}
    p = ensemble.profile_from_json(json.dumps(doc))
    assert np.allclose(p.s, 1 / 3)
    assert np.allclose(p.t, 0.1 + 0.05j)


def test_matrix_binary_roundtrip(tmp_path):
    m = ensemble.sample_elliptic(ensemble.EllipticParams(n=9, rho=0.2), seed=1)
    path = tmp_path / "m.elxm"
    ensemble.save_matrix(m, path)
    raw = path.read_bytes()
    assert raw[:4] == b"ELXM"
    assert int.from_bytes(raw[4:8], "little") == 9
    back = ensemble.load_matrix(path)
    assert np.array_equal(back, m.x)
