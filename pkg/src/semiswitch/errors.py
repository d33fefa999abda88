"""Exception types raised across the package."""

from __future__ import annotations


class SemiSwitchError(Exception):
    """Base class for all package errors."""


# dynamics
class BackwardHorizonExceeded(SemiSwitchError):
    """Backward flow requested past the blow-up horizon s^i(x)."""


class IntegrationDiverged(SemiSwitchError):
    """Integrator produced non-finite values or could not keep tolerance."""


class DepthBudgetExceeded(SemiSwitchError):
    """Bracket generation exceeded its depth or size budget."""


class DomainViolation(SemiSwitchError):
    """A point left the declared domain of a field or scenario."""


# switching
class NotInK(SemiSwitchError):
    """Hybrid state outside the admissible state space K."""


class NoDensity(SemiSwitchError):
    """Holding-time law has atoms or no declared density where one is needed."""


class InvalidSystem(SemiSwitchError):
    """Malformed system description (jump matrix, rates, laws)."""


# process
class JumpBudgetExceeded(SemiSwitchError):
    """Simulation hit its jump cap before the requested horizon."""


class OutOfRange(SemiSwitchError):
    """Time query outside the simulated window."""


# ergodicity
class NoExpDecay(SemiSwitchError):
    """Survival function violates the declared exponential bound."""


class DiscontinuousLaw(SemiSwitchError):
    """Operation requires continuous survival functions."""


# accessibility
class NotAdmissible(SemiSwitchError):
    """Control sequence fails an admissibility clause."""


class ZeroNotInSupport(SemiSwitchError):
    """Approximation routine needs 0 in the support of every law."""


class IrreducibilityPathNotFound(SemiSwitchError):
    """No positive-probability path between two states at a point."""


class NotContracting(SemiSwitchError):
    """Composite map is not a contraction on the interval."""


# estimators
class AxisMismatch(SemiSwitchError):
    """Histograms defined on different bins."""


class DegenerateThreshold(SemiSwitchError):
    """Parameters give a meaningless dwell threshold."""


# config / cli
class ConfigError(SemiSwitchError):
    """Scenario file failed validation; path names the offending key."""

    def __init__(self, message: str, path: tuple = (), line: int | None = None):
        self.message, self.path, self.line = message, tuple(path), line
        super().__init__(self._text())

    def _text(self) -> str:
        where = ".".join(str(p) if not isinstance(p, int) else f"[{p}]" for p in self.path)
        where = where.replace(".[", "[")
        loc = f"line {self.line}: " if self.line else ""
        return f"{loc}{where}: {self.message}" if where else f"{loc}{self.message}"

    def located(self, path: tuple = (), line: int | None = None) -> "ConfigError":
        return ConfigError(self.message, tuple(path) + self.path, line or self.line)
