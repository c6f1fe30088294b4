"""Exception types shared across the package."""


class SpqkdError(Exception):
    """Base class; the CLI maps these to a nonzero exit and a JSON error line."""

    kind = "error"


class InfeasibleParameters(SpqkdError, ValueError):
    kind = "infeasible-parameters"


class EstimationError(SpqkdError, ValueError):
    kind = "estimation-error"


class IntegrationError(SpqkdError, RuntimeError):
    kind = "non-convergent-integration"


class NoRootInBracket(SpqkdError, ValueError):
    kind = "no-root-in-bracket"


class ChannelError(SpqkdError, IOError):
    kind = "channel-failure"


class ProtocolError(SpqkdError, ValueError):
    kind = "protocol-error"


class ScenarioError(SpqkdError, ValueError):
    kind = "scenario-error"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
