class CDPGError(Exception):
    """Base class for errors raised by this package."""


class SequenceError(CDPGError, ValueError):
    """A sequence is unterminated, malformed or too long for its space."""


class UnknownContextError(CDPGError, KeyError):
    """A context has no row in a policy's featurizer table."""


class EnumerationCapError(CDPGError):
    """The sequence space is larger than the configured enumeration cap."""


class EmptyTargetError(CDPGError):
    """The EBM assigns zero mass to every sequence for some context."""


class MissingLambdaError(CDPGError, KeyError):
    """A distributional EBM was scored for a context with no multiplier."""


class UnattainableMomentError(CDPGError, ValueError):
    """The feature target lies outside the range reachable on the sample."""


class NonFiniteUpdateError(CDPGError, FloatingPointError):
    """A parameter update produced NaN or infinite values."""


class DegenerateEstimateError(CDPGError):
    """Every context in an estimate had zero estimated partition function."""


class ConfigError(CDPGError, ValueError):
    """Invalid experiment configuration."""


class InfeasibleTaskError(CDPGError):
    """Some context admits no sequence satisfying the constraint."""
