import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellspec import dyson, ensemble
from ellspec.errors import BranchAmbiguity, NonMember


def quadratic_branch(zeta, rho):
    """Oracle: root of rho*b^2 + zeta*b + 1 = 0 with zeta*b closest to -1."""
    roots = np.roots([rho, zeta, 1.0]) if rho != 0 else np.array([-1.0 / zeta])
    return roots[np.argmin(np.abs(zeta * roots + 1.0))]


def random_nonneg_profile(n, rho, seed):
    """Dense profile with T = rho * sqrt(s o s^T) (entry-wise nonnegative)."""
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.3, 1.7, size=(n, n)) / n
    t = rho * np.sqrt(s * s.T)
    return ensemble.CorrelationProfile(s=s, t=t, rho_bound=rho)


# ---------------------------------------------------------------------------
# solve_b
# ---------------------------------------------------------------------------

def test_solve_b_independent_case():
    p = ensemble.constant_profiles(40, 0.0)
    pr = dyson.solve_b(2.0, p)
    assert np.allclose(pr.b, -0.5, atol=1e-13)
    r, _ = dyson.power_radius((np.abs(pr.b) ** 2)[:, None] * p.s)
    assert r == pytest.approx(0.25, abs=1e-12)
    assert pr.delta == pytest.approx(1.0, abs=1e-12)  # min(|zeta|^2 - 1, 1)
    assert pr.member


def test_solve_b_quadratic_oracle():
    p = ensemble.constant_profiles(40, 0.5)
    pr = dyson.solve_b(3.0, p)
    expected = quadratic_branch(3.0, 0.5)
    assert expected == pytest.approx(-3.0 + np.sqrt(7.0), abs=1e-14)
    assert np.abs(pr.b - expected).max() < 1e-12


def test_solve_b_negative_entrywise_beyond_zeta_star():
    # nonnegative T and real zeta beyond the critical point: b < 0
    p = random_nonneg_profile(30, 0.4, seed=2)
    for zeta in (1.8, 2.5, 4.0):
        pr = dyson.solve_b(zeta, p)
        assert np.all(pr.b.real < 0)
        assert np.abs(pr.b.imag).max() < 1e-12


def test_solve_b_rejects_origin():
    p = ensemble.constant_profiles(10, 0.2)
    with pytest.raises(ValueError):
        dyson.solve_b(0.0, p)


def test_solve_b_nonmember_inside_spectrum():
    p = ensemble.constant_profiles(30, 0.0)
    with pytest.raises(NonMember) as exc:
        dyson.solve_b(0.5, p)
    assert exc.value.last_valid is not None
    assert abs(exc.value.last_valid) > 0.5


def test_solve_b_residual_contract():
    p = random_nonneg_profile(25, 0.3, seed=5)
    for zeta in (2.0 + 0.5j, -1.5 + 1.2j, 3.0 - 2.0j):
        pr = dyson.solve_b(zeta, p, tol=1e-12)
        assert pr.residual <= 1e-12


# ---------------------------------------------------------------------------
# closed form
# ---------------------------------------------------------------------------

def test_elliptic_closed_form_degenerate_rho():
    assert dyson.solve_b_elliptic(2.0, 1e-8) == pytest.approx(-0.5, abs=1e-7)
    assert dyson.solve_b_elliptic(2.0, 0.0) == pytest.approx(-0.5, abs=0)


def test_elliptic_closed_form_hermitian_endpoint():
    assert dyson.solve_b_elliptic(3.0, 1.0) == pytest.approx(
        (-3.0 + np.sqrt(5.0)) / 2.0, abs=1e-14)


def test_elliptic_closed_form_branch_cut():
    with pytest.raises(BranchAmbiguity):
        dyson.solve_b_elliptic(1.0, 0.5)  # inside [-2 sqrt(0.5), 2 sqrt(0.5)]


def test_elliptic_closed_form_vs_generic_solver():
    rng = np.random.default_rng(42)
    rho = 0.5
    p = ensemble.constant_profiles(30, rho)
    checked = 0
    while checked < 100:
        z = complex(rng.uniform(-3, 3), rng.uniform(-3, 3))
        if (z.real / 1.5) ** 2 + (z.imag / 0.5) ** 2 <= 1.3 ** 2:
            continue  # keep a margin outside the ellipse
        b_cl = dyson.solve_b_elliptic(z, rho)
        pr = dyson.solve_b(z, p, tol=1e-13)
        assert np.abs(pr.b - b_cl).max() < 1e-10
        checked += 1


def test_conjugation_symmetry_for_real_t():
    p = random_nonneg_profile(20, 0.35, seed=9)
    rng = np.random.default_rng(1)
    for _ in range(5):
        z = complex(rng.uniform(1.8, 3.0), rng.uniform(0.3, 2.0))
        b1 = dyson.solve_b(z, p).b
        b2 = dyson.solve_b(np.conj(z), p).b
        assert np.abs(b2 - np.conj(b1)).max() < 1e-11


def test_operator_norm_bound_on_bTb():
    p = random_nonneg_profile(20, 0.45, seed=3)
    rho_hat = ensemble.validate_profile(p).rho_hat
    for z in (2.0, 2.0 + 1.0j, -2.2 + 0.4j):
        b = dyson.solve_b(z, p).b
        opnorm = np.linalg.norm(np.diag(b) @ p.t @ np.diag(b), 2)
        assert opnorm <= rho_hat + 1e-10


def test_l2_bound():
    p = random_nonneg_profile(24, 0.4, seed=8)
    rho_hat = ensemble.validate_profile(p).rho_hat
    for z in (1.9, 2.5 + 1.5j, -3.0 + 0.2j):
        b = dyson.solve_b(z, p).b
        norm2 = np.sqrt(np.mean(np.abs(b) ** 2))  # normalized Euclidean norm
        assert norm2 <= (1.0 + rho_hat) / abs(z) + 1e-12


def test_monotonicity_on_circles_for_nonneg_t():
    from ellspec.geometry import find_zeta_star
    p = random_nonneg_profile(20, 0.3, seed=4)
    zs = find_zeta_star(p)
    zhat = zs * 1.05
    b_hat = np.abs(dyson.solve_b(zhat, p).b)
    for z in (zhat * 1.3, (zhat * 1.2) * np.exp(0.9j), -1.5 * zhat):
        b_far = np.abs(dyson.solve_b(z, p).b)
        assert np.all(b_hat > b_far)


def test_reduced_path_equals_dense_path():
    # the class-space restriction is exact algebra; disabling detection
    # must reproduce the same solution to solver tolerance
    p = ensemble.constant_profiles(24, 0.4)
    p_dense = ensemble.constant_profiles(24, 0.4)
    p_dense.__dict__["structure"] = None  # defeat the cached detection
    assert p.structure is not None and p_dense.structure is None
    for z in (2.0 + 0.3j, -1.8 + 1.1j):
        b_red = dyson.solve_b(z, p, tol=1e-13).b
        b_dense = dyson.solve_b(z, p_dense, tol=1e-13).b
        assert np.abs(b_red - b_dense).max() < 1e-12


# ---------------------------------------------------------------------------
# derivative
# ---------------------------------------------------------------------------

def test_db_dzeta_independent_case():
    p = ensemble.constant_profiles(20, 0.0)
    pr = dyson.solve_b(2.0 + 1.0j, p)
    der = dyson.db_dzeta(pr, p)
    assert np.allclose(der, pr.b ** 2, atol=1e-12)
    assert np.allclose(der, 1.0 / (2.0 + 1.0j) ** 2, atol=1e-12)


def test_db_dzeta_finite_difference_oracle():
    p = ensemble.constant_profiles(30, 0.5)
    zeta, h = 3.0 + 0.0j, 1e-6
    der = dyson.db_dzeta(dyson.solve_b(zeta, p), p)
    fd = (dyson.solve_b(zeta + h, p, tol=1e-14).b
          - dyson.solve_b(zeta - h, p, tol=1e-14).b) / (2 * h)
    assert np.abs(der - fd).max() / np.abs(der).max() < 1e-6


def test_db_dzeta_elliptic_symbolic_oracle():
    rho, zeta = 0.5, 3.0 + 0.0j
    p = ensemble.constant_profiles(25, rho)
    der = dyson.db_dzeta(dyson.solve_b(zeta, p), p)
    exact = -(1.0 / (2 * rho)) * (1.0 - zeta / np.sqrt(zeta ** 2 - 4 * rho))
    assert np.abs(der - exact).max() < 1e-11


def test_db_dzeta_requires_membership():
    p = ensemble.constant_profiles(10, 0.0)
    pr = dyson.solve_b(2.0, p)
    bad = dyson.PseudoResolvent(zeta=pr.zeta, b=pr.b, delta=pr.delta,
                                residual=pr.residual, member=False)
    with pytest.raises(ValueError):
        dyson.db_dzeta(bad, p)


# ---------------------------------------------------------------------------
# spectral gap
# ---------------------------------------------------------------------------

def test_spectral_gap_rank_one():
    n = 16
    s = np.full((n, n), 1.0 / n)
    assert dyson.spectral_gap(np.full(n, -0.5), s) == pytest.approx(1.0)


def test_spectral_gap_boundary():
    n = 12
    s = np.full((n, n), 1.0 / n)
    assert dyson.spectral_gap(np.ones(n), s) == pytest.approx(0.0, abs=1e-12)


def test_power_radius_matches_dense_eigensolver():
    rng = np.random.default_rng(0)
    m = rng.uniform(0.1, 1.0, size=(50, 50))
    r, _ = dyson.power_radius(m, rtol=1e-13)
    dense = np.abs(np.linalg.eigvals(m)).max()
    assert abs(r - dense) < 1e-8 * dense


# ---------------------------------------------------------------------------
# 2x2 block equation
# ---------------------------------------------------------------------------

def test_mde_large_zeta():
    p = ensemble.constant_profiles(30, 0.3)
    sol = dyson.solve_mde_2x2(8.0, 1.0, p, tol=1e-12)
    bound = (sol.eta + 1.0) / abs(sol.zeta) ** 2  # eta + matrix-norm scale
    assert sol.a.max() + sol.d.max() < 3.0 * bound
    assert np.abs(sol.b + 1.0 / sol.zeta).max() < 0.05


def test_mde_eta_limit_outside_spectrum():
    p = ensemble.constant_profiles(30, 0.5)
    b_ref = dyson.solve_b(2.0, p).b
    for eta in (1e-2, 1e-3, 1e-4):
        sol = dyson.solve_mde_2x2(2.0, eta, p, tol=1e-13)
        assert sol.a.max() / eta < 2.0
        assert sol.d.max() / eta < 2.0
        assert np.abs(sol.b - b_ref).max() < 10.0 * eta
        res = dyson.mde_equation_residuals(sol, p)
        assert max(res.values()) < 1e-10


def test_mde_inside_spectrum_scalar_oracle():
    # constant rho=0 profile: a solves a = (eta+a)/((eta+a)^2 + |zeta|^2),
    # whose eta->0 limit is sqrt(1 - |zeta|^2) inside the disk
    p = ensemble.constant_profiles(30, 0.0)
    target = np.sqrt(1.0 - 0.1 ** 2)
    prev_gap = np.inf
    for eta in (1e-2, 1e-3):
        sol = dyson.solve_mde_2x2(0.1, eta, p, tol=1e-12, max_iter=500_000)
        gap = abs(sol.a.max() - target)
        assert sol.a.min() > 0.9  # stays bounded below: non-membership
        assert gap < prev_gap
        prev_gap = gap


def test_mde_positivity():
    p = ensemble.constant_profiles(20, 0.4)
    sol = dyson.solve_mde_2x2(1.2 + 0.3j, 1e-3, p)
    assert np.all(sol.a > 0) and np.all(sol.d > 0)


def test_eta_extrapolation_matches_solve_b():
    p = ensemble.constant_profiles(25, 0.5)
    b0 = dyson.extrapolate_b_eta0(2.0 + 0.5j, p, eta0=1e-3, tol=1e-13)
    b_ref = dyson.solve_b(2.0 + 0.5j, p, tol=1e-13).b
    assert np.abs(b0 - b_ref).max() < 1e-7


def test_eta_extrapolation_dense_profile():
    p = random_nonneg_profile(16, 0.3, seed=14)
    b0 = dyson.extrapolate_b_eta0(1.9, p, eta0=1e-3, tol=1e-13)
    b_ref = dyson.solve_b(1.9, p, tol=1e-13).b
    assert np.abs(b0 - b_ref).max() < 1e-7


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(re=st.floats(-3.0, 3.0), im=st.floats(-3.0, 3.0))
def test_property_residual_and_bounds(re, im):
    z = complex(re, im)
    if abs(z) < 2.2:
        z = 2.2 * z / abs(z) if z != 0 else 2.2
    p = ensemble.constant_profiles(12, 0.5)
    pr = dyson.solve_b(z, p, tol=1e-12)
    assert pr.residual <= 1e-12
    assert np.sqrt(np.mean(np.abs(pr.b) ** 2)) <= 1.5 / abs(z) + 1e-12
    # entry-wise sandwich: 1/|b| = |zeta + T b| lies in |zeta| +- rho/|b|max
    lower = abs(z) / (1.0 + abs(z) ** 2)
    assert np.abs(pr.b).min() >= 0.3 * lower
