"""Exception hierarchy shared by all reduction modules."""


class ReductionError(Exception):
    """Base class for every numerical failure raised by interpmor."""


class SingularPencil(ReductionError):
    """``s E - A`` is (numerically) singular at the requested point."""

    def __init__(self, point, message=None):
        self.point = point
        super().__init__(message or f"s*E - A is singular at s = {point!r}")


class SingularShift(SingularPencil):
    """An interpolation point coincides with a pole of the system."""

    def __init__(self, point, message=None):
        super().__init__(point, message or f"shifted matrix is singular at interpolation point {point!r}")


class SingularK(SingularPencil):
    """The coprime factor ``K(s)`` is singular at the requested point."""

    def __init__(self, point, message=None):
        super().__init__(point, message or f"K(s) is singular at s = {point!r}")


class SingularReducedPencil(ReductionError):
    """The projected pencil ``W^T E V`` is singular."""


class SingularReducedK(SingularReducedPencil):
    """The projected coprime factor ``W^T K(s) V`` is singular at a probe point."""


class SingularE(ReductionError):
    """E is singular where an invertible E is required."""


class RepeatedPoles(ReductionError):
    """Eigenvalues of the pencil are not separated enough for a pole-residue form."""


class UnstableSystem(ReductionError):
    """The operation requires an asymptotically stable system."""


class UnstableInput(UnstableSystem):
    """A system or weight passed to the weighted machinery is unstable."""


class NonzeroFeedthrough(ReductionError):
    """The H2 norm is infinite because the feedthrough term is nonzero."""


class RankCollapse(ReductionError):
    """Rank truncation removed every column of a basis."""


class LineSearchFailure(ReductionError):
    """Armijo backtracking did not produce an acceptable step."""


class DuplicatePoints(ReductionError):
    """Interpolation points are not pairwise distinct."""


class SingularLoewnerPencil(ReductionError):
    """The Loewner pencil ``s E_r - A_r`` is singular at a probe point."""


class EvaluationFailure(ReductionError):
    """A transfer-function sampler could not produce a value."""


class NotADelaySystem(ReductionError):
    """The coprime system does not have the single-delay structure required."""


class SingularPencilFamily(ReductionError):
    """``lambda E - A`` is singular for every lambda (the pencil is not regular)."""


class LyapunovFailure(ReductionError):
    """A Lyapunov or Sylvester solve did not reach the required residual."""
