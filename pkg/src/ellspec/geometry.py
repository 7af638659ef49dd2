"""Geometry of the self-consistent pseudospectrum.

For the constant profile the complement of the resolvent set is the closed
ellipse traced by zeta(phi) = e^{i theta/2} (|rho| e^{i phi} + e^{-i phi})
with rho = |rho| e^{i theta}; its rightmost point has real part
sqrt(1 + |rho|^2 + 2 Re rho) = |1 + rho|.  For general nonnegative pair
covariances the rightmost point zeta* is the unique real root of
r(D_{b(zeta)^2} S) = 1, approached by bisection along the real axis.  For
everything else the boundary is traced numerically as a level set of the
stability gap.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from .dyson import RealAxisTracker, solve_b
from .ensemble import CorrelationProfile
from .errors import BracketFailure, NotApplicable, NumericalError


class DomainKind(enum.Enum):
    ELLIPSE_CLOSED_FORM = "EllipseClosedForm"
    TRACED_LEVEL_SET = "TracedLevelSet"


@dataclass(frozen=True)
class SpectralDomain:
    """A closed, positively oriented boundary polyline in the zeta plane."""

    kind: DomainKind
    boundary: np.ndarray      # ordered complex points, not repeated at close
    zeta_star: float
    level: float
    metadata: dict = field(default_factory=dict)


def _signed_area(points: np.ndarray) -> float:
    x, y = points.real, points.imag
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def ellipse_boundary(rho: complex, n_points: int = 360) -> SpectralDomain:
    """Closed-form boundary of the elliptic-law domain for |rho| < 1."""
    rho = complex(rho)
    if abs(rho) >= 1.0:
        raise ValueError("closed-form ellipse requires |rho| < 1")
    theta = np.angle(rho) if rho != 0 else 0.0
    phi = 2.0 * np.pi * np.arange(n_points) / n_points
    pts = np.exp(0.5j * theta) * (abs(rho) * np.exp(1j * phi) + np.exp(-1j * phi))
    if _signed_area(pts) < 0:
        pts = pts[::-1]
    zeta_star = float(np.sqrt(1.0 + abs(rho) ** 2 + 2.0 * rho.real))
    return SpectralDomain(kind=DomainKind.ELLIPSE_CLOSED_FORM, boundary=pts,
                          zeta_star=zeta_star, level=0.0,
                          metadata={"rho": rho, "n_points": n_points})


def ellipse_membership(rho: complex, points: np.ndarray,
                       dilation: float = 0.0) -> np.ndarray:
    """True where points lie in the (1 + dilation)-dilated elliptic domain.

    The membership test rotates by e^{-i theta/2} and checks the axis
    aligned ellipse with semi-axes (1 + |rho|, 1 - |rho|).
    """
    rho = complex(rho)
    theta = np.angle(rho) if rho != 0 else 0.0
    z = np.asarray(points, dtype=complex) * np.exp(-0.5j * theta)
    a = (1.0 + abs(rho)) * (1.0 + dilation)
    b = (1.0 - abs(rho)) * (1.0 + dilation)
    if b == 0.0:
        return (np.abs(z.imag) <= 1e-12) & (np.abs(z.real) <= a)
    return (z.real / a) ** 2 + (z.imag / b) ** 2 <= 1.0


def find_zeta_star(p: CorrelationProfile, tol: float = 1e-10) -> float:
    """Rightmost real point of the pseudospectrum for nonnegative T.

    Bisection on g(zeta) = r(D_{b(zeta)^2} S) - 1 along the real axis; g is
    strictly decreasing to the right of the root, and the bracket is found
    by Newton continuation walking inward from a large starting radius.
    """
    if not p.t_is_real_nonneg:
        raise NotApplicable("zeta* is only characterized for entry-wise "
                            "nonnegative T")
    tracker = RealAxisTracker(p)
    r_s = np.sqrt(max(_radius_of_s(p), 1e-300))
    hi = max(4.0 * (1.0 + r_s), 10.0 * r_s)
    floor = max(1e-3 * r_s, 1e-9 * hi)

    def eval_g(z):
        tracker.eval(z)
        return tracker.radius() - 1.0

    # Walk inward until r(D_b^2 S) crosses 1.  The real solution branch dies
    # a finite distance below zeta* (the edge of the Stieltjes support), so
    # a failed step is retried closer to the last good point rather than
    # treated as fatal.
    z = hi
    z_prev = None
    while True:
        try:
            g = eval_g(z)
        except NumericalError as exc:
            if z_prev is None:
                raise BracketFailure(
                    f"continuation broke down at the start zeta={z:.6g}"
                ) from exc
            recovered = False
            for _ in range(60):
                z = 0.5 * (z + z_prev)
                if abs(z - z_prev) < 1e-14 * max(1.0, abs(z_prev)):
                    break
                try:
                    g = eval_g(z)
                    recovered = True
                    break
                except NumericalError:
                    continue
            if not recovered:
                raise BracketFailure(
                    f"no evaluable point below zeta={z_prev:.6g}") from exc
        if g >= 0.0:
            break
        z_prev = z
        z = 0.9 * z
        if z < floor:
            raise BracketFailure(
                f"r(D_b^2 S) never reached 1 down to zeta={z:.3g}")
    if z_prev is None:
        raise BracketFailure("starting radius already inside the spectrum; "
                             "profile is inconsistent with its scale")

    lo, hi_b = z, z_prev  # g(lo) >= 0 > g(hi_b)
    g_mid = np.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi_b)
        tracker.eval(mid)
        g_mid = tracker.radius() - 1.0
        if g_mid >= 0.0:
            lo = mid
        else:
            hi_b = mid
        if hi_b - lo <= 0.25 * tol * max(1.0, mid) and abs(g_mid) <= tol:
            return float(mid)
    return float(0.5 * (lo + hi_b))


def _radius_of_s(p: CorrelationProfile) -> float:
    from .dyson import _Ops
    return _Ops(p).radius_s()


def trace_level_set(p: CorrelationProfile, level: float, resolution: int = 65,
                    half_width: float | None = None) -> SpectralDomain:
    """Marching-squares trace of the level set {zeta : Delta(zeta) = level}.

    The gap field is evaluated by radial continuation on a square grid; a
    grid point whose continuation fails (the path enters the pseudospectrum)
    is conservatively classified interior.  The longest closed contour is
    returned as the boundary; all contours and the failure count are kept
    in metadata.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if resolution < 32:
        raise ValueError("resolution must be at least 32")
    if half_width is None:
        try:
            half_width = find_zeta_star(p) + 1.0
        except (NotApplicable, BracketFailure):
            half_width = 2.0 * (1.0 + np.sqrt(_radius_of_s(p)))

    xs = np.linspace(-half_width, half_width, resolution)
    ys = np.linspace(-half_width, half_width, resolution)
    delta = np.empty((resolution, resolution))
    failed = 0
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            z = complex(x, y)
            if z == 0:
                delta[iy, ix] = -1.0
                failed += 1
                continue
            try:
                delta[iy, ix] = solve_b(z, p).delta
            except NumericalError:
                delta[iy, ix] = -1.0  # interior by convention
                failed += 1

    contours = measure.find_contours(delta, level)
    if not contours:
        raise NumericalError(
            f"no {level}-level contour found inside half-width {half_width}")
    step = xs[1] - xs[0]

    def to_complex(c):
        # find_contours returns (row, col) = (y-index, x-index) coordinates
        return (xs[0] + c[:, 1] * step) + 1j * (ys[0] + c[:, 0] * step)

    polylines = [to_complex(c) for c in contours]
    lengths = [np.abs(np.diff(c, append=c[:1])).sum() for c in polylines]
    boundary = polylines[int(np.argmax(lengths))]
    closed = np.abs(boundary[0] - boundary[-1]) < 1e-12
    if closed:
        boundary = boundary[:-1]
    if _signed_area(boundary) < 0:
        boundary = boundary[::-1]
    if failed and failed == resolution * resolution:
        warnings.warn("every grid cell failed; the trace is vacuous")
    return SpectralDomain(
        kind=DomainKind.TRACED_LEVEL_SET,
        boundary=boundary,
        zeta_star=float(boundary.real.max()),
        level=float(level),
        metadata={"resolution": resolution, "half_width": half_width,
                  "grid_step": float(step), "failed_cells": failed,
                  "closed": bool(closed),
                  "contours": polylines},
    )
