"""Exception hierarchy for ellspec.

Input/shape problems raise :class:`ProfileError` or plain ``ValueError``;
everything that can only be detected while computing derives from
:class:`NumericalError` so callers (and the CLI exit-code policy) can tell
the two apart.
"""


class EllspecError(Exception):
    """Base class for all ellspec errors."""


class ProfileError(EllspecError, ValueError):
    """A correlation profile is structurally inconsistent."""


class NumericalError(EllspecError):
    """Base class for runtime numerical failures."""


class NonMember(NumericalError):
    """Continuation entered the pseudospectrum (gap closed along the path).

    Attributes
    ----------
    last_valid : complex or None
        Last spectral parameter on the path at which the gap was positive.
    """

    def __init__(self, msg, last_valid=None):
        super().__init__(msg)
        self.last_valid = last_valid


class SingularJacobian(NumericalError):
    """The Dyson linearization lost invertibility (boundary contact)."""


class NoConvergence(NumericalError):
    """An iteration hit its step cap before reaching tolerance.

    Attributes
    ----------
    residual : float
        Residual at the moment the iteration gave up.
    """

    def __init__(self, msg, residual=float("nan")):
        super().__init__(msg)
        self.residual = residual


class NotApplicable(NumericalError):
    """The requested quantity is only defined under extra assumptions
    the inputs do not satisfy (e.g. nonnegative pair covariances)."""


class BracketFailure(NumericalError):
    """Root bracketing for the rightmost critical point failed."""


class NearSingular(NumericalError):
    """A kernel linear system is too ill-conditioned to trust."""


class PoleContact(NumericalError):
    """Closed-form kernel evaluated essentially on its pole manifold."""


class BranchAmbiguity(NumericalError):
    """Spectral parameter lies on the branch cut of the closed form."""


class NotPrimitive(NumericalError):
    """Power positivity failed; no Perron pair is certified."""


class SchurFailure(NumericalError):
    """Schur factorization failed; caller fell back or gave up."""


class Overflow(NumericalError):
    """Result magnitude exceeds the double exponent range."""
