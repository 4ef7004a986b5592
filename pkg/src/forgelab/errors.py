"""Exception hierarchy shared by every forgelab module."""


class ForgeLabError(Exception):
    """Base class for all forgelab errors."""


class ShapeMismatch(ForgeLabError, ValueError):
    def __init__(self, field, expected, got):
        self.field = field
        self.expected = expected
        self.got = got
        super().__init__(f"{field}: expected {expected}, got {got}")


class NonSmoothPoint(ForgeLabError):
    """A pre-activation sits exactly on a kink of a ReLU-family unit."""


class ZeroTargetGradient(ForgeLabError):
    pass


class NegativeDiscriminant(ForgeLabError):
    pass


class DegenerateLabel(ForgeLabError):
    pass


class PatternInconsistent(ForgeLabError):
    pass


class ZeroCandidate(ForgeLabError):
    pass


class PoolExhausted(ForgeLabError):
    """Greedy search stalled above tolerance; carries the best batch found."""

    def __init__(self, batch, residual, epsilon):
        self.batch = batch
        self.residual = residual
        self.epsilon = epsilon
        super().__init__(f"best residual {residual:.3e} exceeds epsilon {epsilon:.3e}")


class DimensionTooLarge(ForgeLabError):
    pass


class InadmissibleTightRegime(ForgeLabError):
    pass


class InadmissibleRegime(ForgeLabError):
    pass


class AllZeroOuterWeights(ForgeLabError):
    pass


class EpsilonTooLarge(ForgeLabError):
    pass


class CoverTooLarge(ForgeLabError):
    pass


class NonFiniteIterate(ForgeLabError):
    def __init__(self, step):
        self.step = step
        super().__init__(f"non-finite iterate at step {step}")


class TargetAbsent(ForgeLabError):
    pass


class HypothesisViolated(ForgeLabError):
    pass


class EnvelopeTooLoose(ForgeLabError):
    pass


class InvalidThickening(ForgeLabError):
    pass


class ConfigError(ForgeLabError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
