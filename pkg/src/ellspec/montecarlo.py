"""Finite-N verification of the deterministic theory.

The quantity of interest is the sphere-averaged squared solution norm of
u' = -u + g X u, which equals the normalized trace

    E_{u0} ||u_t||^2 = tr_N e^{t (g X* - I)} e^{t (g X - I)}
                     = ||e^{t (g X - I)}||_F^2 / N,

evaluated exactly (no sampling over initial conditions).  One complex
Schur factorization per replica is amortized over the whole t-grid; the
Frobenius norm is invariant under the unitary similarity, so the
exponential of the triangular factor is all that is needed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._config import get_max_workers
from .ensemble import (CorrelationProfile, EllipticParams, SampledMatrix,
                       sample_elliptic, sample_elliptic_type)
from .errors import NumericalError, SchurFailure


@dataclass(frozen=True)
class McStudy:
    """Specification of a Monte Carlo run.

    ``source`` is either an :class:`EllipticParams` (constant covariances)
    or a general :class:`CorrelationProfile`.  Times must be sorted
    ascending and at least two replicas are required, otherwise the
    standard error is undefined.
    """

    source: object
    g: float
    times: tuple
    replicas: int
    base_seed: int = 0
    gaussian: bool = True
    collect_spectra: bool = False

    def __post_init__(self):
        if not isinstance(self.source, (EllipticParams, CorrelationProfile)):
            raise TypeError("source must be EllipticParams or CorrelationProfile")
        if isinstance(self.source, EllipticParams) and abs(self.source.rho) >= 1:
            raise ValueError("the deterministic reference requires |rho| < 1")
        times = tuple(float(t) for t in self.times)
        if any(t < 0 for t in times):
            raise ValueError("times must be nonnegative")
        if list(times) != sorted(times):
            raise ValueError("times must be sorted ascending")
        if self.replicas < 2:
            raise ValueError("need at least 2 replicas for a standard error")
        if self.g <= 0:
            raise ValueError("coupling g must be positive")
        object.__setattr__(self, "times", times)

    @property
    def n(self) -> int:
        return self.source.n


@dataclass(frozen=True)
class McResult:
    """Per-time aggregates plus the deterministic reference and z-scores."""

    times: np.ndarray
    mc_mean: np.ndarray
    mc_stderr: np.ndarray
    reference: np.ndarray
    z_scores: np.ndarray
    values: np.ndarray            # (replicas, times); nan rows = failures
    spectra: list | None
    failures: list


def evolve_norm(x, g: float, times) -> np.ndarray:
    """tr_N e^{t(gX*-I)} e^{t(gX-I)} for each t.

    Schur-factorizes g X - I once and exponentiates the triangular factor
    per time; falls back to scaling-and-squaring on the full matrix if the
    QR iteration inside Schur fails.
    """
    mat = x.x if isinstance(x, SampledMatrix) else np.asarray(x)
    times = np.asarray(list(times), dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    n = mat.shape[0]
    a = g * mat - np.eye(n)
    try:
        tri, _ = scipy.linalg.schur(a.astype(complex), output="complex")
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
        tri = None
    out = np.empty(len(times))
    for i, t in enumerate(times):
        if t == 0.0:
            out[i] = 1.0
            continue
        if tri is not None:
            expt = scipy.linalg.expm(t * tri)
        else:
            try:
                expt = scipy.linalg.expm(t * a)
            except Exception as exc:  # pragma: no cover - double failure
                raise SchurFailure(f"matrix exponential failed at t={t}") from exc
        out[i] = float(np.linalg.norm(expt, "fro") ** 2) / n
    return out


def empirical_spectrum(x) -> np.ndarray:
    """All eigenvalues of the sampled matrix (dense nonsymmetric solver)."""
    mat = x.x if isinstance(x, SampledMatrix) else np.asarray(x)
    try:
        return np.linalg.eigvals(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc


def _sample(study: McStudy, replica: int) -> SampledMatrix:
    src = study.source
    if isinstance(src, EllipticParams):
        return sample_elliptic(src, study.base_seed, spawn_key=(replica,))
    return sample_elliptic_type(src, study.base_seed, gaussian=study.gaussian,
                                spawn_key=(replica,))


def _reference(study: McStudy, times: np.ndarray) -> np.ndarray:
    """Deterministic prediction: Bessel series for constant covariances,
    double-contour quadrature otherwise."""
    from . import bessel, quadrature

    src = study.source
    if isinstance(src, EllipticParams):
        rho = complex(src.rho)
        profile = None
    else:
        st = src.structure
        if st is not None and st.k == 1 and abs(st.s_red[0, 0] - 1.0) < 1e-12:
            rho = complex(st.t_red[0, 0])
        else:
            rho = None
        profile = src
    if rho is not None and abs(rho) > 0:
        return np.array([bessel.decay_series(rho, study.g, t).value
                         for t in times])
    if profile is None:
        from .ensemble import constant_profiles
        profile = constant_profiles(study.source.n, rho if rho is not None else 0.0)
    return quadrature.decay_curve(profile, study.g, times).deterministic


def run_study(study: McStudy) -> McResult:
    """Sample, evolve and aggregate all replicas; z = (mean - ref)/stderr.

    Replicas use independently split seed streams and run in a thread pool;
    results are reduced in replica order so the output is reproducible.
    Per-replica failures are recorded and excluded from the aggregates.
    """
    times = np.asarray(study.times)
    values = np.full((study.replicas, len(times)), np.nan)
    spectra: list = [None] * study.replicas if study.collect_spectra else []
    failures: list = []

    def one(replica: int):
        m = _sample(study, replica)
        vals = evolve_norm(m, study.g, times)
        spec = empirical_spectrum(m) if study.collect_spectra else None
        return vals, spec

    with ThreadPoolExecutor(max_workers=get_max_workers()) as pool:
        futures = {r: pool.submit(one, r) for r in range(study.replicas)}
        for r in range(study.replicas):
            try:
                vals, spec = futures[r].result()
                values[r] = vals
                if study.collect_spectra:
                    spectra[r] = spec
            except Exception as exc:
                failures.append((r, repr(exc)))

    ok = ~np.isnan(values[:, 0])
    n_ok = int(ok.sum())
    if n_ok < 2:
        raise NumericalError(f"only {n_ok} replicas succeeded; "
                             f"failures: {failures}")
    mean = values[ok].mean(axis=0)
    stderr = values[ok].std(axis=0, ddof=1) / np.sqrt(n_ok)
    reference = _reference(study, times)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(stderr > 0, (mean - reference) / stderr,
                     np.where(mean == reference, 0.0, np.inf))
    return McResult(times=times, mc_mean=mean, mc_stderr=stderr,
                    reference=reference, z_scores=z, values=values,
                    spectra=spectra if study.collect_spectra else None,
                    failures=failures)
