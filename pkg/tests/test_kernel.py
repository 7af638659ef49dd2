import numpy as np
import pytest

from ellspec import dyson, ensemble, geometry, kernel
from ellspec.errors import NotPrimitive, PoleContact


def random_profile_t0(n, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.3, 1.7, size=(n, n)) / n
    return ensemble.CorrelationProfile(s=s, t=np.zeros((n, n)), rho_bound=0.0)


def test_kernel_general_rank_one_oracle():
    p = ensemble.constant_profiles(24, 0.0)
    ke = kernel.kernel_general(2.0, 2.0, p)
    assert ke.value == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert ke.min_sing > 0


def test_kernel_decays_at_infinity():
    p = ensemble.constant_profiles(16, 0.0)
    k50 = kernel.kernel_general(50.0, 2.0, p).value
    k100 = kernel.kernel_general(100.0, 2.0, p).value
    assert abs(k50) < 3.0 / 50.0
    assert abs(k100) == pytest.approx(abs(k50) / 2.0, rel=0.05)


def test_kernel_cross_form_constant_profile():
    rho = 0.5
    p = ensemble.constant_profiles(32, rho)
    rng = np.random.default_rng(3)
    done = 0
    while done < 12:
        z1 = complex(rng.uniform(-3, 3), rng.uniform(-3, 3))
        z2 = complex(rng.uniform(-3, 3), rng.uniform(-3, 3))
        if np.any(geometry.ellipse_membership(rho, np.array([z1, z2]),
                                              dilation=0.25)):
            continue
        kg = kernel.kernel_general(z1, z2, p).value
        ke = kernel.kernel_elliptic(z1, z2, rho)
        assert abs(kg - ke) < 1e-10
        done += 1


def test_kernel_elliptic_reduces_to_independent():
    for z1, z2 in ((2.0, 1.5 + 0.5j), (3.0 - 1.0j, -2.0 + 0.3j)):
        ke = kernel.kernel_elliptic(z1, z2, 1e-12)
        assert ke == pytest.approx(1.0 / (z1 * np.conj(z2) - 1.0), abs=1e-10)


def test_kernel_elliptic_pole_contact():
    with pytest.raises(PoleContact):
        kernel.kernel_elliptic(1.5 + 1e-14, 1.5 + 1e-14, 0.5)


def test_kernel_elliptic_diverges_at_rightmost_point():
    # |b| -> 1 on the boundary, so K -> +infinity as zeta -> zeta*+
    vals = [kernel.kernel_elliptic(1.5 + d, 1.5 + d, 0.5).real
            for d in (0.1, 0.01, 1e-3, 1e-5)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 1e2


def test_kernel_independent_rank_one():
    n = 20
    s = np.full((n, n), 1.0 / n)
    v = kernel.kernel_independent(2.0, 1.5 - 0.3j, s)
    assert v == pytest.approx(1.0 / (2.0 * np.conj(1.5 - 0.3j) - 1.0), abs=1e-12)


def test_kernel_independent_matches_general_at_t0():
    p = random_profile_t0(24, seed=8)
    for z1, z2 in ((2.2, 1.9 + 0.7j), (2.5 - 0.8j, -2.1 + 0.2j)):
        kg = kernel.kernel_general(z1, z2, p).value
        ki = kernel.kernel_independent(z1, z2, p.s)
        assert abs(kg - ki) < 1e-12


def test_kernel_independent_two_block_reduced_oracle():
    # 2-class S; the reduced 2x2 system gives the exact value
    n = 30
    counts = np.array([10, 20])
    labels = np.repeat([0, 1], counts)
    vals = np.array([[0.8, 0.3], [0.3, 1.2]]) / n
    s = vals[np.ix_(labels, labels)]
    u = (2.0 + 0.4j) * np.conj(1.8 - 0.2j)
    s_red = vals * counts[None, :]
    y = np.linalg.solve(u * np.eye(2) - s_red, np.ones(2))
    expected = (counts / n) @ y
    got = kernel.kernel_independent(2.0 + 0.4j, 1.8 - 0.2j, s)
    assert abs(got - expected) < 1e-13


def test_kernel_hermitian_symmetry_all_forms():
    rho = 0.4
    p = ensemble.constant_profiles(20, rho)
    pt = random_profile_t0(20, seed=4)
    z1, z2 = 2.1 + 0.8j, -1.9 + 0.5j
    assert kernel.kernel_general(z1, z2, p).value == pytest.approx(
        np.conj(kernel.kernel_general(z2, z1, p).value), abs=1e-13)
    assert kernel.kernel_elliptic(z1, z2, rho) == pytest.approx(
        np.conj(kernel.kernel_elliptic(z2, z1, rho)), abs=1e-14)
    assert kernel.kernel_independent(z1, z2, pt.s) == pytest.approx(
        np.conj(kernel.kernel_independent(z2, z1, pt.s)), abs=1e-14)


def test_batch_kernel_matches_pointwise():
    p = ensemble.constant_profiles(18, 0.3)
    pt = random_profile_t0(18, seed=6)
    zs = np.array([2.0 + 0.5j, 2.5 - 0.7j, -2.2 + 0.1j])
    for prof in (p, pt):
        bs = np.array([dyson.solve_b(z, prof, tol=1e-13).b for z in zs])
        km = kernel.batch_kernel(prof, bs, bs)
        for j, z1 in enumerate(zs):
            for k, z2 in enumerate(zs):
                ref = kernel.kernel_general(z1, z2, prof).value
                assert abs(km[j, k] - ref) < 1e-11


# ---------------------------------------------------------------------------
# Perron pairs
# ---------------------------------------------------------------------------

def test_perron_pair_constant_matrix():
    n = 12
    v_l, v_r, radius = kernel.perron_pair(np.full((n, n), 1.0 / n))
    assert np.allclose(v_l, 1.0, atol=1e-12)
    assert np.allclose(v_r, 1.0, atol=1e-12)
    assert radius == pytest.approx(1.0, abs=1e-12)


def test_perron_pair_dense_eigensolver_oracle():
    rng = np.random.default_rng(5)
    m = rng.uniform(0.05, 1.0, size=(50, 50))
    v_l, v_r, radius = kernel.perron_pair(m)
    dense = np.abs(np.linalg.eigvals(m)).max()
    assert abs(radius - dense) < 1e-8 * dense
    assert np.mean(v_l * v_r) == pytest.approx(1.0, abs=1e-10)
    assert np.all(v_l > 0) and np.all(v_r > 0)


def test_perron_pair_comparability_bounds():
    # epsilon from the power-positivity constants bounds the eigenvectors
    rng = np.random.default_rng(7)
    m = rng.uniform(0.1, 1.0, size=(40, 40))
    v_l, v_r, radius = kernel.perron_pair(m, primitivity_l=2)
    n = m.shape[0]
    r_norm = m / radius
    power = np.linalg.matrix_power(r_norm, 2)
    eps = min(float(n * power.min()), 1.0 / float(n * power.max()))
    assert eps > 0
    for v in (v_l, v_r):
        assert np.all(v >= eps * v.mean() - 1e-12)
        assert np.all(v <= v.mean() / eps + 1e-12)


def test_perron_pair_rejects_periodic():
    with pytest.raises(NotPrimitive):
        kernel.perron_pair(np.array([[0.0, 1.0], [1.0, 0.0]]))


# ---------------------------------------------------------------------------
# A(S, T) and the derivative data
# ---------------------------------------------------------------------------

def test_coefficient_a_elliptic_cross_check_small():
    for rho in (0.0, 0.25, 0.5):
        p = ensemble.constant_profiles(40, rho)
        sd = kernel.coefficient_A(p)
        g = 1.0 / sd.zeta_star
        expected = (1.0 - rho) ** 2 * np.sqrt(g / 2.0)
        assert abs(sd.a_coeff - expected) < 1e-8
        assert sd.diagnostics["expr_rel_diff"] < 1e-10


def test_coefficient_a_two_block():
    n = 60
    half = n // 2
    s = np.zeros((n, n))
    s[:half, :half] = s[half:, half:] = 0.5 / n
    s[:half, half:] = s[half:, :half] = 1.5 / n
    t = 0.4 * np.sqrt(s * s.T)
    p = ensemble.CorrelationProfile(s=s, t=t, rho_bound=0.4)
    sd = kernel.coefficient_A(p)
    # this profile is effectively elliptic with rho = 0.4
    assert sd.zeta_star == pytest.approx(1.4, abs=1e-9)
    assert sd.a_coeff == pytest.approx(0.36 / np.sqrt(2.8), abs=1e-8)
    assert sd.d2_lambda > 0 and sd.d2z2 > 0
    # operator norm of F = D_|b| T D_|b| at the critical point
    babs = np.abs(sd.diagnostics["b_star"])
    f_mat = babs[:, None] * p.t.real * babs[None, :]
    assert np.linalg.norm(f_mat, 2) <= 0.4 + 1e-10


def test_perron_pair_of_critical_operator():
    # the Perron pair of D_{|b|^2} S at zeta* is positive and comparable
    p = ensemble.constant_profiles(30, 0.3)
    sd = kernel.coefficient_A(p)
    assert np.all(sd.v_l > 0) and np.all(sd.v_r > 0)
    assert np.mean(sd.v_l * sd.v_r) == pytest.approx(1.0, abs=1e-10)


def test_coefficient_a_rejects_signed_t():
    n = 10
    s = np.full((n, n), 1.0 / n)
    p = ensemble.CorrelationProfile(s=s, t=np.full((n, n), -0.2 / n),
                                    rho_bound=0.5)
    with pytest.raises(Exception) as exc:
        kernel.coefficient_A(p)
    assert "nonnegative" in str(exc.value)


def _fd_lambda_setup(rho=0.5, n=40):
    p = ensemble.constant_profiles(n, rho)
    sd = kernel.coefficient_A(p)
    tracker = kernel.LambdaTracker(p, sd.v_r)
    return p, sd, tracker


def test_d2_lambda_matches_finite_differences():
    _, sd, tracker = _fd_lambda_setup()
    zs = sd.zeta_star
    h = 1e-5
    fd = (tracker.eval(zs, zs + h) - tracker.eval(zs, zs - h)) / (2 * h)
    assert abs(fd - sd.d2_lambda) / sd.d2_lambda < 1e-6


def _implicit_path(tracker, z1, z_guess):
    """Solve lambda(z1, z) = 0 for z by a guarded secant iteration."""
    z = z_guess
    f = tracker.eval(z1, z)
    dz = 1e-7
    for _ in range(80):
        fp = (tracker.eval(z1, z + dz) - tracker.eval(z1, z - dz)) / (2 * dz)
        step = f / fp
        z -= step
        f = tracker.eval(z1, z)
        if abs(step) < 1e-13:
            return z
    return z


def test_implicit_path_derivatives_match_finite_differences():
    _, sd, tracker = _fd_lambda_setup()
    zs = sd.zeta_star

    def z2_of(u):
        return _implicit_path(tracker, zs + u, zs - u)

    z0 = z2_of(0.0)
    # first derivative: -1 by symmetry of the two arguments
    u = 1e-4
    dz2 = (z2_of(u) - z2_of(-u)) / (2 * u)
    assert abs(dz2 - (-1.0)) < 1e-6

    # second derivative with one Richardson level on the central stencil;
    # the nearby branch point keeps the plain-stencil constant large, so
    # the base step is small
    def second(u):
        return (z2_of(u) - 2.0 * z0 + z2_of(-u)) / u ** 2

    d2_a, d2_b = second(2e-3), second(1e-3)
    d2 = (4.0 * d2_b - d2_a) / 3.0
    assert abs(d2 - sd.d2z2) / sd.d2z2 < 1e-6
