class PmcmcError(Exception):
    """Base class for numeric failures inside the particle machinery."""


class ModelEvaluationError(PmcmcError):
    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (t={t})")
        self.t = t


class SingularModelError(ModelEvaluationError):
    pass


class DegenerateWeightsError(PmcmcError):
    def __init__(self, t, what="importance weights"):
        super().__init__(f"all {what} are zero at t={t}")
        self.t = t


class DegenerateConstraintError(PmcmcError):
    def __init__(self, t):
        super().__init__(f"fixed parent has zero resampling mass at t={t}")
        self.t = t


class SamplerError(PmcmcError):
    def __init__(self, sweep, part, cause):
        super().__init__(f"sweep {sweep}, part {part}: {cause}")
        self.sweep = sweep
        self.part = part
        self.cause = cause


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass
