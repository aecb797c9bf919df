"""Exception taxonomy shared by all modules.

Every failure mode that a caller can act on gets its own class; anything else
is allowed to surface as a plain ValueError from the offending call site.
"""


class WkbDisperseError(Exception):
    """Base class for all package-specific failures."""


class GridTooCoarse(WkbDisperseError):
    """A sampling grid is too coarse for the certificate being computed."""


class TurningPoint(WkbDisperseError):
    """lambda^2 - V(x) vanishes or changes sign on the integration path."""


class TailTooFat(WkbDisperseError):
    """The certified integration tail exceeds the requested accuracy."""


class NonConstantWronskian(WkbDisperseError):
    """Wronskian spread across evaluation points exceeds tolerance."""


class WkbUnavailable(WkbDisperseError):
    """No globally valid WKB phase decomposition in the requested regime."""


class NoConvergence(WkbDisperseError):
    """Independent evaluation routes disagree beyond the allowed tolerance."""


class HypothesisViolated(WkbDisperseError):
    """Quantitative hypotheses of a bound check fail on the sampled grid."""


class ResourceLimit(WkbDisperseError):
    """A configured size or memory cap would be exceeded."""


class HorizonExceeded(WkbDisperseError):
    """Requested evolution time is beyond the trusted reflection horizon."""


class BroadeningTooNarrow(WkbDisperseError):
    """Spectral broadening below the resolvable level spacing."""


class ConfigError(WkbDisperseError):
    """Run configuration is malformed or inconsistent."""
