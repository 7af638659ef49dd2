"""Correlation profiles and samplers for elliptic / elliptic-type matrices.

A profile holds the pairwise second moments of the random matrix: the
variance matrix ``s`` with s_ij = E|x_ij|^2 and the pair-covariance matrix
``t`` with t_ij = E[x_ij x_ji] (symmetric by definition).  Samplers realize
one matrix per (profile, seed): off-diagonal pairs (x_ij, x_ji) are drawn
jointly so the mixed moments are matched exactly, pairs are independent of
each other, and the draw is a pure function of the seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._structure import detect_blocks
from .errors import ProfileError

_MAGIC = b"ELXM"


@dataclass(frozen=True)
class CorrelationProfile:
    """Second-moment data (s, t) of an elliptic-type ensemble.

    Parameters
    ----------
    s : (n, n) ndarray
        Entry variances, nonnegative.
    t : (n, n) ndarray
        Pair covariances; must equal its transpose (t_ij = t_ji is forced
        by the definition E[x_ij x_ji]).
    rho_bound : float
        Declared bound |t_ij| <= rho_bound * sqrt(s_ij s_ji); must lie in
        [0, 1).  Whether the bound actually holds is checked by
        :func:`validate_profile`, not at construction.
    tag : str
        Free-form identifier carried into sampled matrices.
    """

    s: np.ndarray
    t: np.ndarray
    rho_bound: float
    tag: str = ""

    def __post_init__(self):
        s = np.ascontiguousarray(np.asarray(self.s, dtype=float))
        t = np.ascontiguousarray(np.asarray(self.t, dtype=complex))
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ProfileError("s must be a square matrix")
        if t.shape != s.shape:
            raise ProfileError("t must have the same shape as s")
        if s.shape[0] < 1:
            raise ProfileError("dimension must be at least 1")
        if np.any(s < 0):
            raise ProfileError("variances s_ij must be nonnegative")
        if not np.allclose(t, t.T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(t).max())):
            raise ProfileError("t must be symmetric: t_ij = E[x_ij x_ji] = t_ji")
        if not 0.0 <= self.rho_bound < 1.0:
            raise ProfileError("rho_bound must lie in [0, 1)")
        t = 0.5 * (t + t.T)  # kill roundoff asymmetry
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def t_is_real_nonneg(self) -> bool:
        return bool(np.all(self.t.imag == 0.0) and np.all(self.t.real >= 0.0))

    @cached_property
    def structure(self):
        """Exact block structure, or None for unstructured profiles."""
        return detect_blocks(self.s, self.t)


@dataclass(frozen=True)
class EllipticParams:
    """Parameters of the classical elliptic ensemble: E|x_ij|^2 = 1/n and
    E[x_ij x_ji] = rho/n with |rho| <= 1."""

    n: int
    rho: complex
    gaussian: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ProfileError("dimension must be at least 1")
        if abs(self.rho) > 1.0 + 1e-15:
            raise ProfileError("|rho| must not exceed 1")
        object.__setattr__(self, "rho", complex(self.rho))


@dataclass(frozen=True)
class SampledMatrix:
    """One realization of the random matrix, reproducible from its seed."""

    x: np.ndarray
    seed: int
    profile_tag: str = ""

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of checking a profile against the standing assumptions."""

    rho_hat: float            # tightest rho with |t_ij| <= rho sqrt(s_ij s_ji)
    c0_s: float               # min_ij n * (S^L)_ij
    c0_ss: float              # min_ij n * ((S^T S)^L)_ij
    primitivity_l: int
    passes_nonhermitian: bool  # rho_hat < 1 strictly (assumption 2.D)
    passes_primitivity: bool   # both c0 estimates positive (assumption 2.E)

    @property
    def ok(self) -> bool:
        return self.passes_nonhermitian and self.passes_primitivity


def constant_profiles(n: int, rho: complex, tag: str = "") -> CorrelationProfile:
    """Profile of the elliptic ensemble: s_ij = 1/n, t_ij = rho/n.

    Rejects |rho| >= 1: the deterministic theory needs the genuinely
    non-Hermitian regime.
    """
    rho = complex(rho)
    if abs(rho) >= 1.0:
        raise ProfileError("constant profiles require |rho| < 1")
    s = np.full((n, n), 1.0 / n)
    t = np.full((n, n), rho / n)
    return CorrelationProfile(s=s, t=t, rho_bound=abs(rho),
                              tag=tag or f"constant(n={n},rho={rho})")


def validate_profile(p: CorrelationProfile, primitivity_l: int = 4) -> ValidationReport:
    """Measure how a profile sits relative to assumptions (2.D) and (2.E).

    Always returns a report; callers decide what to do with failures.
    ``rho_hat`` is taken over off-diagonal index pairs.  The primitivity
    constants are min_ij n*(S^L)_ij and min_ij n*((S^T S)^L)_ij, computed
    with dense matrix powers.
    """
    n = p.n
    s, t = p.s, p.t
    off = ~np.eye(n, dtype=bool)
    denom = np.sqrt(s * s.T)
    ratio = np.zeros((n, n))
    good = denom > 0
    ratio[good] = np.abs(t[good]) / denom[good]
    # |t| > 0 with zero variance product: no finite rho works
    ratio[~good & (np.abs(t) > 0)] = np.inf
    rho_hat = float(ratio[off].max()) if n > 1 else 0.0

    sl = np.linalg.matrix_power(s, primitivity_l)
    ssl = np.linalg.matrix_power(s.T @ s, primitivity_l)
    c0_s = float(n * sl.min())
    c0_ss = float(n * ssl.min())
    return ValidationReport(
        rho_hat=rho_hat,
        c0_s=c0_s,
        c0_ss=c0_ss,
        primitivity_l=primitivity_l,
        passes_nonhermitian=rho_hat < 1.0,
        passes_primitivity=c0_s > 0.0 and c0_ss > 0.0,
    )


def _rng_for(seed: int, spawn_key: tuple = ()) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=spawn_key))


def replica_seed_sequence(base_seed: int, replica: int) -> np.random.SeedSequence:
    """Splittable per-replica stream: (seed, replica-index) -> SeedSequence."""
    return np.random.SeedSequence(base_seed, spawn_key=(replica,))


def _standard_pairs(rng: np.random.Generator, m: int, gaussian: bool):
    """Unit-variance factor draws for m pairs: two proper complex units
    w1, w2 with E|w|^2 = 1, E w^2 = 0, built from four real factors.

    The non-Gaussian surrogate swaps the normal factors for Rademacher
    signs; second moments are unchanged because the pair construction is
    linear in the factors.
    """
    if gaussian:
        f = rng.standard_normal((4, m))
    else:
        f = rng.integers(0, 2, size=(4, m)).astype(float) * 2.0 - 1.0
    w1 = (f[0] + 1j * f[1]) / np.sqrt(2.0)
    w2 = (f[2] + 1j * f[3]) / np.sqrt(2.0)
    return w1, w2


def _diag_draw(rng: np.random.Generator, tau: np.ndarray, gaussian: bool):
    """Centered unit-variance diagonal entries with E[x^2] = tau.

    Realized as e^{i arg(tau)/2} (alpha p + i beta q) with
    alpha, beta = sqrt((1 +- |tau|)/2); at tau = 1 the entry is real, which
    keeps the fully symmetric case exactly Hermitian.
    """
    m = len(tau)
    if gaussian:
        f = rng.standard_normal((2, m))
    else:
        f = rng.integers(0, 2, size=(2, m)).astype(float) * 2.0 - 1.0
    at = np.abs(tau)
    alpha = np.sqrt((1.0 + at) / 2.0)
    beta = np.sqrt((1.0 - at) / 2.0)
    phase = np.exp(0.5j * np.angle(np.where(at > 0, tau, 1.0)))
    return phase * (alpha * f[0] + 1j * beta * f[1])


def _sample_from_moments(s: np.ndarray, t: np.ndarray, seed: int,
                         gaussian: bool, tag: str,
                         spawn_key: tuple = ()) -> SampledMatrix:
    n = s.shape[0]
    rng = _rng_for(seed, spawn_key)
    iu, ju = np.triu_indices(n, k=1)
    s_up = s[iu, ju]
    s_lo = s[ju, iu]
    t_up = t[iu, ju]

    denom = np.sqrt(s_up * s_lo)
    tau = np.zeros(len(iu), dtype=complex)
    pos = denom > 0
    tau[pos] = t_up[pos] / denom[pos]
    if np.any(~pos & (np.abs(t_up) > 0)):
        raise ProfileError("t_ij != 0 where s_ij * s_ji = 0: "
                           "pair covariance block is not positive semidefinite")
    if np.any(np.abs(tau) > 1.0 + 1e-12):
        raise ProfileError("|t_ij| > sqrt(s_ij s_ji): "
                           "pair covariance block is not positive semidefinite")
    over = np.abs(tau) > 1.0  # roundoff at saturation
    if np.any(over):
        tau[over] /= np.abs(tau[over])

    w1, w2 = _standard_pairs(rng, len(iu), gaussian)
    upper = np.sqrt(s_up) * w1
    lower = np.sqrt(s_lo) * (tau * np.conj(w1)
                             + np.sqrt(np.maximum(0.0, 1.0 - np.abs(tau) ** 2)) * w2)

    s_d = np.diag(s).copy()
    t_d = np.diag(t).copy()
    tau_d = np.zeros(n, dtype=complex)
    pos_d = s_d > 0
    tau_d[pos_d] = t_d[pos_d] / s_d[pos_d]
    if np.any(~pos_d & (np.abs(t_d) > 0)) or np.any(np.abs(tau_d) > 1.0 + 1e-12):
        raise ProfileError("diagonal covariance t_ii inconsistent with s_ii")
    over_d = np.abs(tau_d) > 1.0
    if np.any(over_d):
        tau_d[over_d] /= np.abs(tau_d[over_d])

    x = np.zeros((n, n), dtype=complex)
    x[iu, ju] = upper
    x[ju, iu] = lower
    x[np.arange(n), np.arange(n)] = np.sqrt(s_d) * _diag_draw(rng, tau_d, gaussian)
    return SampledMatrix(x=x, seed=seed, profile_tag=tag)


def sample_elliptic(params: EllipticParams, seed: int,
                    spawn_key: tuple = ()) -> SampledMatrix:
    """Draw one elliptic matrix: E|x_ij|^2 = 1/n, E[x_ij x_ji] = rho/n.

    For rho = 1 the Gaussian construction returns an exactly Hermitian
    matrix.  Bit-identical for identical (params, seed).
    """
    n = params.n
    s = np.full((n, n), 1.0 / n)
    t = np.full((n, n), params.rho / n)
    return _sample_from_moments(s, t, seed, params.gaussian,
                                tag=f"elliptic(n={n},rho={params.rho})",
                                spawn_key=spawn_key)


def sample_elliptic_type(p: CorrelationProfile, seed: int, gaussian: bool = True,
                         spawn_key: tuple = ()) -> SampledMatrix:
    """Draw one matrix from a general profile (pairs jointly Gaussian or
    the signed-Bernoulli surrogate with identical second moments)."""
    return _sample_from_moments(p.s, p.t, seed, gaussian,
                                tag=p.tag or "elliptic-type",
                                spawn_key=spawn_key)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _matrix_to_json(m: np.ndarray):
    if np.iscomplexobj(m):
        if np.any(m.imag != 0):
            return [[[float(v.real), float(v.imag)] for v in row] for row in m]
        m = m.real
    return [[float(v) for v in row] for row in m]


def _matrix_from_json(obj, n: int, name: str) -> np.ndarray:
    if isinstance(obj, dict):
        if obj.get("kind") != "constant":
            raise ProfileError(f"unknown {name} spec: {obj!r}")
        v = obj["value"]
        value = complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)
        return np.full((n, n), value)
    arr = np.asarray(obj, dtype=object)
    flat = np.asarray(obj)
    if flat.ndim == 3:  # [re, im] pairs
        out = flat[..., 0] + 1j * flat[..., 1]
    elif flat.ndim == 2:
        out = flat.astype(complex)
    elif flat.ndim == 1 and len(flat) == n * n:
        out = flat.astype(complex).reshape(n, n)
    else:
        raise ProfileError(f"cannot interpret {name} of shape {arr.shape}")
    return out


def profile_to_json(p: CorrelationProfile) -> str:
    doc = {"n": p.n, "s": _matrix_to_json(p.s), "t": _matrix_to_json(p.t),
           "rho_bound": p.rho_bound}
    if p.tag:
        doc["tag"] = p.tag
    return json.dumps(doc)


def profile_from_json(text: str) -> CorrelationProfile:
    doc = json.loads(text)
    n = int(doc["n"])
    s = _matrix_from_json(doc["s"], n, "s")
    if np.any(s.imag != 0):
        raise ProfileError("s must be real")
    t = _matrix_from_json(doc["t"], n, "t")
    return CorrelationProfile(s=s.real, t=t, rho_bound=float(doc["rho_bound"]),
                              tag=doc.get("tag", ""))


def save_profile(p: CorrelationProfile, path) -> None:
    with open(path, "w") as fh:
        fh.write(profile_to_json(p))


def load_profile(path) -> CorrelationProfile:
    with open(path) as fh:
        return profile_from_json(fh.read())


def save_matrix(m: SampledMatrix, path) -> None:
    """Binary export: magic 'ELXM', little-endian u32 n, n^2 complex
    doubles row-major."""
    x = np.ascontiguousarray(m.x, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", x.shape[0]))
        fh.write(x.astype("<c16").tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ProfileError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        (n,) = struct.unpack("<I", fh.read(4))
        data = np.frombuffer(fh.read(16 * n * n), dtype="<c16")
        if data.size != n * n:
            raise ProfileError("truncated matrix file")
        return data.reshape(n, n).astype(np.complex128)
