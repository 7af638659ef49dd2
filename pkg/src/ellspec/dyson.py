"""Solvers for the self-consistent pseudo-resolvent.

The defining vector equation is

    1 + (zeta + T b(zeta)) b(zeta) = 0            (entry-wise products)

whose solution branch with zeta*b -> -1 at infinity is followed by radial
homotopy continuation with Newton correction.  The stability gap

    Delta(zeta) = min( r(D_{|b|^2} S)^{-1} - 1,  1 )

is positive exactly on the resolvent-set component reached from infinity;
membership is declared at a configurable threshold.  A regularized 2x2
block formulation at spectral parameter i*eta gives an independent, second
route to the same object via its eta -> 0 limit.

On block-constant profiles every solve restricts exactly to the class
space (see _structure), which is what makes desk-scale parameter sweeps
cheap; the restriction is algebra, not approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import CorrelationProfile
from .errors import (BranchAmbiguity, NoConvergence, NonMember,
                     SingularJacobian)

DELTA_MEMBER_DEFAULT = 1e-6


@dataclass(frozen=True)
class PseudoResolvent:
    """Solution b(zeta) together with its stability data."""

    zeta: complex
    b: np.ndarray
    delta: float
    residual: float
    member: bool

    def to_json_dict(self) -> dict:
        return {
            "zeta": [self.zeta.real, self.zeta.imag],
            "delta": self.delta,
            "residual": self.residual,
            "member": self.member,
            "b": [[v.real, v.imag] for v in self.b],
        }


@dataclass(frozen=True)
class MdeSolution2x2:
    """Solution of the regularized 2x2 block equation at z = i*eta."""

    zeta: complex
    eta: float
    a: np.ndarray
    d: np.ndarray
    b: np.ndarray
    residual: float
    iterations: int


# ---------------------------------------------------------------------------
# spectral radius of entry-wise nonnegative matrices
# ---------------------------------------------------------------------------

def power_radius(m: np.ndarray, v0: np.ndarray | None = None,
                 rtol: float = 1e-10, max_iter: int = 5000):
    """Spectral radius of a nonnegative matrix by power iteration.

    Starts from the all-ones vector (strictly positive, so it overlaps the
    Perron vector of a primitive matrix).  Returns (radius, vector).  Falls
    back to a dense eigensolver if the iteration cycles without settling.
    """
    n = m.shape[0]
    v = np.ones(n) if v0 is None else np.maximum(np.asarray(v0, dtype=float), 0.0)
    if not np.any(v > 0):
        v = np.ones(n)
    v = v / v.sum()
    lam_prev = np.inf
    for _ in range(max_iter):
        w = m @ v
        lam = w.sum()  # = ||w||_1 / ||v||_1 for nonnegative data
        if lam <= 0.0:
            return 0.0, v
        w /= lam
        if abs(lam - lam_prev) <= rtol * lam and np.abs(w - v).sum() <= rtol:
            return float(lam), w
        v, lam_prev = w, lam
    if n <= 2048:
        return float(np.abs(np.linalg.eigvals(m)).max()), v
    raise NoConvergence("power iteration did not settle", residual=float("nan"))


def spectral_gap(b: np.ndarray, s: np.ndarray) -> float:
    """Stability gap Delta = min(r(D_{|b|^2} S)^{-1} - 1, 1)."""
    r, _ = power_radius((np.abs(np.asarray(b)) ** 2)[:, None] * s)
    if r == 0.0:
        return 1.0
    return float(min(1.0 / r - 1.0, 1.0))


# ---------------------------------------------------------------------------
# closed form for the constant (elliptic) profile
# ---------------------------------------------------------------------------

def solve_b_elliptic(zeta: complex, rho: complex) -> complex:
    """Scalar pseudo-resolvent of the elliptic ensemble.

    Solves rho*b^2 + zeta*b + 1 = 0 on the branch with zeta*b -> -1 at
    infinity.  Writing b = -1/w with zeta = w + rho/w, that branch is the
    root w of w^2 - zeta*w + rho = 0 of larger modulus; the two roots tie
    exactly on the branch-cut segment [-2 sqrt(rho), 2 sqrt(rho)], which is
    rejected.  rho = 0 degenerates smoothly to b = -1/zeta.
    """
    zeta = complex(zeta)
    rho = complex(rho)
    if zeta == 0 and rho == 0:
        raise ZeroDivisionError("zeta = 0 is not in the resolvent set")
    disc = np.sqrt(complex(zeta * zeta - 4.0 * rho))
    w1 = 0.5 * (zeta + disc)
    w2 = 0.5 * (zeta - disc)
    w = w1 if abs(w1) >= abs(w2) else w2
    small = min(abs(w1), abs(w2))
    if abs(w) - small <= 1e-13 * abs(w) and rho != 0:
        raise BranchAmbiguity(
            f"zeta={zeta} lies on the branch cut [-2 sqrt(rho), 2 sqrt(rho)]")
    return -1.0 / w


# ---------------------------------------------------------------------------
# generic solver: radial homotopy with Newton correction
# ---------------------------------------------------------------------------

class _Ops:
    """Dense or exactly-reduced realization of the profile operators."""

    def __init__(self, p: CorrelationProfile, reduce: bool = True):
        self.profile = p
        st = p.structure if reduce else None
        self.structure = st
        if st is not None:
            self.t_mat = st.t_red
            self.s_mat = st.s_red
            self.dim = st.k
        else:
            self.t_mat = p.t
            self.s_mat = p.s
            self.dim = p.n

    def expand(self, b: np.ndarray) -> np.ndarray:
        if self.structure is not None:
            return self.structure.expand(b)
        return b

    def newton_step(self, zeta: complex, b: np.ndarray):
        """One Newton correction for F(b) = 1 + (zeta + T b) b."""
        q = zeta + self.t_mat @ b
        f = 1.0 + q * b
        jac = np.diag(q) + b[:, None] * self.t_mat
        delta = np.linalg.solve(jac, -f)
        return b + delta, float(np.abs(f).max()), float(np.abs(delta).max())

    def residual(self, zeta: complex, b: np.ndarray) -> float:
        return float(np.abs(1.0 + (zeta + self.t_mat @ b) * b).max())

    def gap_radius(self, b: np.ndarray, warm=None):
        m = (np.abs(b) ** 2)[:, None] * self.s_mat
        return power_radius(m, v0=warm)

    def radius_s(self) -> float:
        return power_radius(self.s_mat)[0]


def _newton(ops: _Ops, zeta: complex, b: np.ndarray, tol: float,
            max_iter: int = 60) -> np.ndarray:
    for _ in range(max_iter):
        b, res, step = ops.newton_step(zeta, b)
        if res <= tol and step <= tol:
            return b
    raise NoConvergence(f"Newton stalled at zeta={zeta}", residual=res)


def solve_b(zeta: complex, p: CorrelationProfile, tol: float = 1e-12,
            delta_member: float = DELTA_MEMBER_DEFAULT) -> PseudoResolvent:
    """Pseudo-resolvent b(zeta) by homotopy continuation from infinity.

    Starts at R*zeta/|zeta| with R large, where b = -1/zeta is an excellent
    seed, and walks radially inward with geometric steps, Newton-correcting
    at each stop and halving the step on Newton failure.  The stability
    radius is tracked along the path.

    Raises
    ------
    NonMember
        The path reached a point with r(D_{|b|^2} S) >= 1 (gap closed); the
        exception carries the last valid parameter.
    SingularJacobian
        Newton could not proceed even with the minimal step (linearization
        lost invertibility before the gap criterion tripped).
    """
    zeta = complex(zeta)
    if zeta == 0:
        raise ValueError("zeta = 0 is never in the resolvent set")
    if tol <= 0:
        raise ValueError("tol must be positive")
    ops = _Ops(p)
    target = abs(zeta)
    phase = zeta / target
    radius = max(10.0, 4.0 * (1.0 + np.sqrt(ops.radius_s())), 1.5 * target)

    b = np.full(ops.dim, -1.0 / (radius * phase), dtype=complex)
    b = _newton(ops, radius * phase, b, tol)
    shrink = 1.0 / 1.35
    last_valid = radius * phase
    warm = None
    while True:
        r_s, warm = ops.gap_radius(b, warm)
        if r_s >= 1.0:
            raise NonMember(
                f"gap closed on the ray to zeta={zeta} (radius {radius:.6g})",
                last_valid=last_valid)
        last_valid = radius * phase
        if radius <= target * (1.0 + 1e-15):
            break
        step = shrink
        while True:
            radius_next = max(target, radius * step)
            try:
                b_next = _newton(ops, radius_next * phase, b, tol)
                break
            except (NoConvergence, np.linalg.LinAlgError) as exc:
                step = np.sqrt(step)
                if step > 1.0 - 1e-4:
                    if isinstance(exc, np.linalg.LinAlgError):
                        raise SingularJacobian(
                            f"Dyson linearization singular near {radius * phase}"
                        ) from exc
                    raise NonMember(
                        f"continuation to zeta={zeta} broke down",
                        last_valid=last_valid) from exc
        b, radius = b_next, radius_next

    delta = 1.0 if r_s == 0.0 else float(min(1.0 / r_s - 1.0, 1.0))
    b_full = ops.expand(b)
    return PseudoResolvent(
        zeta=zeta,
        b=b_full,
        delta=delta,
        residual=ops.residual(zeta, b),
        member=bool(delta > delta_member),
    )


class RealAxisTracker:
    """Newton continuation of b along the real axis with warm starts.

    Unlike :func:`solve_b` this follows the analytic extension across the
    critical point zeta* (the linearization D_b^{-2} - T stays invertible
    there), so it can evaluate b slightly inside |zeta| <= zeta*.  Used by
    the geometry and kernel layers for root finding and extrapolation at
    zeta*.  The first evaluation performs its own inward homotopy, so it
    must be at a point of the resolvent set; subsequent calls warm-start
    from the previous solution and may cross the boundary.
    """

    def __init__(self, p: CorrelationProfile, tol: float = 1e-13):
        self._ops = _Ops(p)
        self._b = None
        self._warm = None
        self.tol = tol

    def eval(self, z: float) -> np.ndarray:
        """Full-length b at real parameter z (warm-started Newton)."""
        ops = self._ops
        z = float(z)
        if self._b is None:
            radius = max(10.0, 4.0 * (1.0 + np.sqrt(ops.radius_s())), 1.5 * abs(z))
            sign = 1.0 if z >= 0 else -1.0
            b = np.full(ops.dim, -1.0 / (sign * radius), dtype=complex)
            r = radius
            while r > abs(z) * (1.0 + 1e-15):
                b = _newton(ops, sign * r, b, self.tol)
                r = max(abs(z), r / 1.35)
            self._b = b
        self._b = _newton(ops, z, self._b, self.tol)
        return ops.expand(self._b)

    def radius(self) -> float:
        """r(D_{|b|^2} S) at the most recent evaluation."""
        if self._b is None:
            raise RuntimeError("no evaluation yet")
        r, self._warm = self._ops.gap_radius(self._b, self._warm)
        return float(r)


def db_dzeta(pr: PseudoResolvent, p: CorrelationProfile) -> np.ndarray:
    """Derivative of the pseudo-resolvent, (D_b^{-2} - T)^{-1} 1.

    Requires a member point; the linear system is the (invertible, by the
    operator-norm bound on D_b T D_b) Dyson linearization.
    """
    if not pr.member:
        raise ValueError("db_dzeta requires a member PseudoResolvent")
    b = pr.b
    mat = np.diag(1.0 / b ** 2) - p.t
    try:
        return np.linalg.solve(mat, np.ones(p.n, dtype=complex))
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian("D_b^{-2} - T is singular") from exc


# ---------------------------------------------------------------------------
# regularized 2x2 block equation at z = i*eta
# ---------------------------------------------------------------------------

def solve_mde_2x2(zeta: complex, eta: float, p: CorrelationProfile,
                  tol: float = 1e-11, max_iter: int = 200_000,
                  damping: float = 1.0) -> MdeSolution2x2:
    """Damped fixed-point iteration for the 2x2 block solution (a, b, d).

    The iteration map is the contractive self-consistency map

        q = zeta + T b,   u = eta + S d,   v = eta + S^T a,
        D = u v + |q|^2,
        a <- v / D,   d <- u / D,   b <- -conj(q) / D,

    started from a = d = 1, b = -conj(zeta)/(1 + |zeta|^2).  The residual
    is the max-norm distance between successive iterates; the defining
    equations hold at the fixed point to the same order.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    zeta = complex(zeta)
    n = p.n
    s = p.s
    st = s.T
    t = p.t
    a = np.ones(n)
    d = np.ones(n)
    b = np.full(n, -np.conj(zeta) / (1.0 + abs(zeta) ** 2), dtype=complex)
    omega = float(damping)
    res = np.inf
    for it in range(1, max_iter + 1):
        q = zeta + t @ b
        u = eta + s @ d
        v = eta + st @ a
        dd = u * v + np.abs(q) ** 2
        a_new = v / dd
        d_new = u / dd
        b_new = -np.conj(q) / dd
        res = max(np.abs(a_new - a).max(), np.abs(d_new - d).max(),
                  np.abs(b_new - b).max())
        if omega != 1.0:
            a = (1 - omega) * a + omega * a_new
            d = (1 - omega) * d + omega * d_new
            b = (1 - omega) * b + omega * b_new
        else:
            a, d, b = a_new, d_new, b_new
        if res <= tol:
            return MdeSolution2x2(zeta=zeta, eta=eta, a=a, d=d, b=b,
                                  residual=float(res), iterations=it)
    raise NoConvergence(
        f"2x2 block iteration did not reach {tol} in {max_iter} steps",
        residual=float(res))


def mde_equation_residuals(sol: MdeSolution2x2, p: CorrelationProfile) -> dict:
    """Max-norm residuals of the defining scalar equations at a solution.

    Keys: 'b_eq' for 1 + (T b + zeta) b = a (S d + eta); 'a_eq', 'd_eq' for
    the two quadratic relations; 'offdiag' for the b self-consistency.
    """
    a, d, b = sol.a, sol.d, sol.b
    eta, zeta = sol.eta, sol.zeta
    s, st, t = p.s, p.s.T, p.t
    q = zeta + t @ b
    u = eta + s @ d
    v = eta + st @ a
    dd = u * v + np.abs(q) ** 2
    return {
        "b_eq": float(np.abs(1.0 + q * b - a * u).max()),
        "a_eq": float(np.abs(a - (v * np.abs(b) ** 2 + u * a ** 2)).max()),
        "d_eq": float(np.abs(d - (u * np.abs(b) ** 2 + v * d ** 2)).max()),
        "offdiag": float(np.abs(b + np.conj(q) / dd).max()),
    }


def extrapolate_b_eta0(zeta: complex, p: CorrelationProfile, eta0: float = 1e-3,
                       tol: float = 1e-11) -> np.ndarray:
    """Richardson limit of the off-diagonal block over eta in
    {eta0, eta0/2, eta0/4}; the second route to b(zeta)."""
    etas = [eta0, eta0 / 2.0, eta0 / 4.0]
    bs = [solve_mde_2x2(zeta, e, p, tol=tol).b for e in etas]
    # Neville evaluation at eta = 0 of the quadratic through the three nodes
    x = etas
    p0, p1, p2 = (np.asarray(b, dtype=complex) for b in bs)
    p01 = ((0 - x[1]) * p0 - (0 - x[0]) * p1) / (x[0] - x[1])
    p12 = ((0 - x[2]) * p1 - (0 - x[1]) * p2) / (x[1] - x[2])
    return ((0 - x[2]) * p01 - (0 - x[0]) * p12) / (x[0] - x[2])
