"""ellspec: deterministic spectral theory of elliptic-type non-Hermitian
random matrices, and its Monte Carlo verification.

The library computes the self-consistent pseudo-resolvent b(zeta), the
pseudospectrum geometry, the two-resolvent kernel K(zeta1, zeta2), and the
long-time decay of the coupled linear system u' = -u + g X u, and checks
every prediction against sampled matrices at desk scale.
"""

from . import bessel, dyson, ensemble, errors, geometry, kernel, montecarlo, quadrature
from ._config import get_max_workers, set_max_workers

__version__ = "0.1.0"

__all__ = [
    "bessel",
    "dyson",
    "ensemble",
    "errors",
    "geometry",
    "kernel",
    "montecarlo",
    "quadrature",
    "get_max_workers",
    "set_max_workers",
    "__version__",
]
