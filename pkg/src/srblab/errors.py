"""Exception types raised across the package."""


class SRBLabError(Exception):
    """Base class for every error raised by srblab."""


class ParameterError(SRBLabError, ValueError):
    """A parameter is missing or outside its admissible range."""


class OrbitError(SRBLabError):
    """Iteration produced a non-finite point."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite value at orbit step {step}")


class UnsupportedPerturbation(SRBLabError):
    pass


class HyperbolicityError(SRBLabError):
    """Finite-time singular values failed to separate."""


class NonConvergenceError(SRBLabError):
    def __init__(self, message, residual=None, history=None):
        self.residual = residual
        self.history = history
        super().__init__(message)


class MeanNotZeroError(SRBLabError, ValueError):
    def __init__(self, mean, message=None):
        self.mean = mean
        super().__init__(message or f"right-hand side is not mean-zero (measured mean {mean:.3e})")


class NoiseDominatedError(SRBLabError):
    def __init__(self, noise_floor, message=None):
        self.noise_floor = noise_floor
        super().__init__(message or f"noise-dominated: fewer than 3 usable points above 3x noise floor {noise_floor:.3e}")


class ConfigError(SRBLabError, ValueError):
    """Invalid experiment configuration; `key` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
