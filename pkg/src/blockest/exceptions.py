"""Exception and warning classes raised across the package."""


class BlockestError(Exception):
    """Base class for all errors raised by blockest."""


class ModelError(BlockestError, ValueError):
    """Invalid stochastic blockmodel specification."""


class NonSymmetric(ModelError):
    pass


class OutOfRange(ModelError):
    pass


class BadSimplex(ModelError):
    pass


class RankDeficiencyAmbiguous(ModelError):
    """An eigenvalue of B sits too close to the rank cutoff to classify."""


class ConvergenceFailure(BlockestError, RuntimeError):
    pass


class EmptyBlock(BlockestError, ValueError):
    pass


class EmptyBlockPair(EmptyBlock):
    pass


class InfeasibleInit(BlockestError, ValueError):
    pass


class SingularDelta(BlockestError, ArithmeticError):
    """The second-moment matrix of the latent positions is (numerically) singular."""


class SingularDeltaHat(SingularDelta):
    pass


class DegenerateParams(BlockestError, ValueError):
    pass


class SingularInfo(BlockestError, ArithmeticError):
    pass


class MismatchedRegime(BlockestError, ValueError):
    pass


class ModulusTie(UserWarning):
    """Eigenvalues d and d+1 have (nearly) equal modulus; the embedding is not unique."""


class EmptyClusterWarning(UserWarning):
    pass


class BoundaryWarning(UserWarning):
    pass


class SparseRegimeWarning(UserWarning):
    pass
