"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad hazard parameters, budgets, or config keys."""


class InfeasibleBudgetError(RuntimeError):
    """The total budget cannot cover the mandatory full-observation phase."""
