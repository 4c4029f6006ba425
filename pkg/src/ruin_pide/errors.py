"""Exception hierarchy. Every expected failure is a RuinPideError."""


class RuinPideError(Exception):
    """Base class for all ruin-pide errors."""

    pass


class ConfigError(RuinPideError):
    """A run configuration failed to load or validate.

    Carries every problem found, not just the first one.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems) if self.problems else "invalid config")


class TripletError(RuinPideError):
    """A Lévy triplet violates the positivity condition Π(]−∞,−1]) = 0."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__(
            "price driver violates Π(]−∞,−1]) = 0 (Doléans exponential must stay positive): "
            + "; ".join(self.violations)
        )


class SimulationError(RuinPideError):
    """Path simulation was asked something impossible."""

    pass


class GridError(RuinPideError):
    """Grid construction or truncation check failed."""

    pass


class StencilError(RuinPideError):
    """The discrete operator lost monotonicity."""

    pass


class CFLError(RuinPideError):
    """The explicit jump part cannot satisfy Δ·λ ≤ 1 within the sub-step cap."""

    pass


class SolverError(RuinPideError):
    """Backward solve failed (singular system or range violation)."""

    pass


class VerificationError(RuinPideError):
    """A viscosity check was requested at an invalid point."""

    pass


class OracleError(RuinPideError):
    """Reference formula called outside its domain."""

    pass
