"""
Exception types shared by the simulator modules and the CLI.
"""


class TsmError(Exception):
    """Base class for all simulator errors"""


class DomainError(TsmError, ValueError):
    """An invariant or precondition was violated"""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnsupportedCaseError(TsmError, ValueError):
    pass


class SimulationDiverged(TsmError, RuntimeError):
    """State became non-finite during a run"""

    def __init__(self, t, message):
        self.t = t
        super().__init__(f"simulation diverged at t={t}: {message}")


class ScenarioError(TsmError, ValueError):
    """Configuration could not be parsed or failed validation"""

    def __init__(self, message, source=None, line=None, key=None):
        self.source = source
        self.line = line
        self.key = key
        context = []
        if source:
            context.append(str(source))
        if line is not None:
            context.append(f"line {line}")
        if key:
            context.append(f"key '{key}'")
        prefix = f"[{', '.join(context)}] " if context else ""
        super().__init__(f"{prefix}{message}")


# CLI exit codes
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGED = 2
EXIT_IO = 3
