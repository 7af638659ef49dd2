"""Modified Bessel functions of the first kind and the constant-profile
closed forms for the decay of the coupled ODE system.

The deterministic limit of E||u_t||^2 for the elliptic ensemble is

    e^{-2t} sum_{j>=1} |rho|^{-j} | (j/(t g)) I_j(2 sqrt(rho) t g) |^2,

whose large-t behaviour collapses, by Graf's addition theorem, to a
combination of I_0 and I_2 and finally to the universal
t^{-1/2}-corrected law.  I_k is computed by ascending series for small
arguments and by Miller's backward recurrence normalized with the
generating-function identity for large ones; everything downstream works
on exponentially scaled values so the series stays finite far beyond the
naive overflow point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Overflow

_SERIES_CUTOFF = 20.0
_EXP_LIMIT = 700.0
LOG_SPACE_CUTOFF = 350.0  # t*g beyond which everything is done in logs


@dataclass(frozen=True)
class BesselSeriesResult:
    """Value of the decay series with truncation diagnostics.

    ``log_value`` carries the result in log space; ``value`` is its exp and
    may underflow to zero deep in the subcritical regime.
    """

    value: float
    terms_used: int
    truncation_bound: float
    log_value: float


def _bessel_series(k: int, z: complex) -> complex:
    # ascending series (z/2)^k sum_m (z^2/4)^m / (m! (m+k)!)
    half = z / 2.0
    term = 1.0 + 0.0j
    for m in range(1, k + 1):
        term = term * half / m
    total = term
    zz = half * half
    m = 1
    while True:
        term = term * zz / (m * (m + k))
        total += term
        if abs(term) <= 1e-17 * abs(total) + 1e-300:
            return total
        m += 1
        if m > 20000:
            return total


def _scaled_table(kmax: int, z: complex) -> np.ndarray:
    """I_k(z) * e^{-|Re z|} for k = 0..kmax by backward (Miller) recurrence.

    The downward pass is normalized with the generating-function identity
    I_0(z) + 2 sum_{k>=1} I_k(z) = e^z, scaled so the target is the finite
    e^{i Im z}.  For Re z < 0 that sum is exponentially cancellative, so the
    table is built at -z and reflected with I_k(-z) = (-1)^k I_k(z).
    """
    if z == 0:
        out = np.zeros(kmax + 1, dtype=complex)
        out[0] = 1.0
        return out
    if z.real < 0:
        out = _scaled_table(kmax, -z)
        out[1::2] = -out[1::2]
        return out
    start = int(max(kmax, 1.2 * abs(z))
                + 2.0 * np.sqrt(15.0 * max(kmax, abs(z), 1.0)) + 30)
    vals = np.zeros(start + 2, dtype=complex)
    vals[start] = 1e-280
    for j in range(start, 0, -1):
        vals[j - 1] = vals[j + 1] + (2.0 * j / z) * vals[j]
        if abs(vals[j - 1]) > 1e240:
            vals /= 1e240  # whole table, so relative scales stay consistent
    norm = vals[0] + 2.0 * np.sum(vals[1:])
    target = np.exp(1j * z.imag)  # e^z scaled by e^{-Re z}
    return vals[: kmax + 1] * (target / norm)


def bessel_i(k: int, z: complex) -> complex:
    """Modified Bessel function I_k(z) for integer order, complex argument.

    Ascending power series for |z| <= 20, Miller backward recurrence with
    generating-function normalization beyond; relative accuracy ~1e-12.
    Raises Overflow once e^{|Re z|} leaves the double range; use the
    scaled routines internally in that regime.
    """
    k = abs(int(k))
    z = complex(z)
    if z == 0:
        return 1.0 + 0.0j if k == 0 else 0.0 + 0.0j
    if abs(z.real) > _EXP_LIMIT:
        raise Overflow(f"|Re z| = {abs(z.real):.1f} exceeds the exp range; "
                       "use the scaled decay routines")
    if abs(z) <= _SERIES_CUTOFF:
        return _bessel_series(k, z)
    return complex(_scaled_table(k, z)[k] * np.exp(abs(z.real)))


def _log_scaled_magnitudes(kmax: int, z: complex) -> np.ndarray:
    """log(|I_k(z)| e^{-|Re z|}) for k = 0..kmax.

    Same backward recurrence as :func:`_scaled_table`, but only magnitudes
    are kept and every rescale of the sliding window is logged into a
    cumulative exponent, so the result spans arbitrarily many orders of
    magnitude (deep-time decay sums need ~10^4 of them).
    """
    z = complex(z)
    if z.real < 0:
        z = -z  # |I_k| is parity-invariant
    if z == 0:
        out = np.full(kmax + 1, -np.inf)
        out[0] = 0.0
        return out
    start = int(max(kmax, 1.2 * abs(z))
                + 2.0 * np.sqrt(15.0 * max(kmax, abs(z), 1.0)) + 30)
    big = 1e240
    log_big = np.log(big)
    logmag = np.full(kmax + 1, -np.inf)
    v_up = 0.0 + 0.0j       # value at order j+1
    v = 1e-280 + 0.0j       # value at order j
    if start <= kmax:
        logmag[start] = np.log(abs(v))
    norm_acc = 2.0 * v if start >= 1 else v
    exponent = 0
    for j in range(start, 0, -1):
        v_dn = v_up + (2.0 * j / z) * v
        if j - 1 <= kmax:
            logmag[j - 1] = np.log(abs(v_dn)) + exponent * log_big
        norm_acc += (2.0 * v_dn) if j - 1 >= 1 else v_dn
        if abs(v_dn) > big:
            v_dn /= big
            v /= big
            norm_acc /= big   # older, smaller contributions wash out
            exponent += 1
        v_up, v = v, v_dn
    log_norm = np.log(abs(norm_acc)) + exponent * log_big
    return logmag - log_norm  # |e^z| e^{-Re z} = 1, so no target factor


def _decay_log_terms(rho: complex, g: float, t: float, tol: float):
    """Log-magnitudes of the series terms, grown until truncation."""
    z = 2.0 * np.sqrt(complex(rho)) * t * g
    log_rho = np.log(abs(rho))
    tg = t * g
    onset = np.e * abs(np.sqrt(complex(rho))) * tg
    kmax = int(max(onset, 8) + 10.0 * np.sqrt(max(onset, 4.0)) + 30)
    while True:
        log_abs = _log_scaled_magnitudes(kmax, z)
        base = 2.0 * abs(z.real) - 2.0 * t  # magnitudes scaled by e^{-|Re z|}
        js = np.arange(1, kmax + 1)
        logs = (-js * log_rho + 2.0 * (np.log(js) - np.log(tg))
                + 2.0 * log_abs[1:kmax + 1] + base)
        # running log-sum-exp with the truncation rule: stop once past the
        # super-exponential onset with a term below tol * partial sum
        log_sum = -np.inf
        stop = None
        for idx, lj in enumerate(logs):
            j = idx + 1
            if j > onset and lj < np.log(tol) + log_sum:
                stop = j
                break
            log_sum = np.logaddexp(log_sum, lj)
        if stop is not None:
            return logs, log_sum, stop
        kmax = int(kmax * 1.5) + 10
        if kmax > 10_000_000:
            raise Overflow("decay series failed to truncate")


def decay_series(rho: complex, g: float, t: float, tol: float = 1e-12,
                 log_space: bool | None = None) -> BesselSeriesResult:
    """Decay series e^{-2t} sum_{j>=1} |rho|^{-j} |(j/(tg)) I_j(2 sqrt(rho) tg)|^2.

    Truncates when the index has passed the super-exponential onset
    e |sqrt(rho)| t g and the next term is below tol times the partial sum.
    ``log_space`` forces (True) or suppresses (False) log-domain summation;
    the default switches automatically at t*g > 350.  t = 0 returns the
    exact initial value 1.
    """
    rho = complex(rho)
    if not 0.0 < abs(rho) < 1.0:
        raise ValueError("decay_series needs 0 < |rho| < 1")
    if g <= 0:
        raise ValueError("coupling g must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return BesselSeriesResult(value=1.0, terms_used=0,
                                  truncation_bound=0.0, log_value=0.0)
    if log_space is None:
        log_space = t * g > LOG_SPACE_CUTOFF
    logs, log_sum, stop = _decay_log_terms(rho, g, t, tol)
    # identical arithmetic either way; the flag only controls whether the
    # final exponentiation is allowed to leave the double range
    with np.errstate(over="ignore"):
        value = float(np.exp(log_sum))
    if not log_space and not np.isfinite(value):
        raise Overflow("decay series overflows in direct mode; "
                       "pass log_space=True")
    with np.errstate(over="ignore"):
        bound = float(np.exp(logs[stop - 1]))  # logs[j-1] is the j-th term
    return BesselSeriesResult(value=value, terms_used=int(stop - 1),
                              truncation_bound=bound,
                              log_value=float(log_sum))


def _zeta_tilde(rho: complex) -> float:
    return float(np.sqrt(2.0 * rho.real + abs(rho) ** 2 + 1.0))


def _asym_coeff(rho: complex) -> float:
    return float((1.0 + abs(rho) ** 2)
                 - 2.0 * ((rho + abs(rho) ** 2) / (rho + 1.0)).real)


def decay_asymptotic(rho: complex, g: float, t: float) -> float:
    """Large-t approximation of the decay series:

        e^{2t (g zt - 1)} / sqrt(2 pi * 2 t g zt) * coeff,

    with zt = sqrt(2 Re rho + |rho|^2 + 1) and
    coeff = (1 + |rho|^2) - 2 Re((rho + |rho|^2)/(rho + 1)); for real rho
    the coefficient simplifies to (1 - rho)^2.
    """
    with np.errstate(over="ignore"):
        return float(np.exp(decay_asymptotic_log(rho, g, t)))


def decay_asymptotic_log(rho: complex, g: float, t: float) -> float:
    rho = complex(rho)
    if abs(rho) >= 1.0:
        raise ValueError("|rho| must be < 1")
    if t <= 0 or g <= 0:
        raise ValueError("t and g must be positive")
    zt = _zeta_tilde(rho)
    return float(2.0 * t * (g * zt - 1.0)
                 - 0.5 * np.log(2.0 * np.pi * 2.0 * t * g * zt)
                 + np.log(_asym_coeff(rho)))


def graf_check(x: complex, y: complex, c: complex, nu: int,
               n_terms: int) -> tuple[complex, complex]:
    """Both sides of Graf's addition theorem at a complex angle.

    lhs = sum_{n=-N}^{N} c^n I_{n+nu}(x) I_n(y);
    rhs = ((x + y/c)/(x + y c))^{nu/2} I_nu(sqrt(x^2 + y^2 + x y (c + 1/c))).

    The square roots of the ratio and of the argument are only defined up
    to a joint sign (u, w) -> (-u, -w); they are tied together through
    u = (x + y/c)/w, which two independent principal roots may violate for
    odd orders.  Diagnostic only; the caller compares the two sides.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if c == 0:
        raise ValueError("c must be nonzero")
    x, y, c = complex(x), complex(y), complex(c)
    lhs = 0.0 + 0.0j
    for n in range(-n_terms, n_terms + 1):
        lhs += c ** n * bessel_i(n + nu, x) * bessel_i(n, y)
    # note x^2 + y^2 + x y (c + 1/c) = (x + y c)(x + y/c)
    w = np.sqrt(x * x + y * y + x * y * (c + 1.0 / c))
    if w == 0:
        return lhs, complex(bessel_i(nu, 0.0) if nu == 0 else 0.0)
    u = (x + y / c) / w
    rhs = u ** nu * bessel_i(nu, w)
    return lhs, complex(rhs)


def negative_tail_bound(rho: complex, g: float, t: float) -> float:
    """Upper bound on the negatively indexed part of the full lattice sum:

        e^{4 |Re sqrt(rho)| t g} |rho| (1 + |rho|) / ((t g)^2 (1 - |rho|)^3).

    Follows from |I_k(z)| <= I_0(|Re z|) < e^{|Re z|} and the geometric sum
    of j^2 |rho|^j.  Returns inf when the bound itself overflows (still an
    upper bound).
    """
    rho = complex(rho)
    if abs(rho) >= 1.0:
        raise ValueError("|rho| must be < 1")
    tg = t * g
    if tg <= 0:
        return float("inf")
    a = abs(rho)
    exponent = 4.0 * abs(np.sqrt(complex(rho)).real) * tg
    log_bound = exponent + np.log(a * (1.0 + a)) - 2.0 * np.log(tg) \
        - 3.0 * np.log(1.0 - a) if a > 0 else -np.inf
    with np.errstate(over="ignore"):
        return float(np.exp(log_bound))
