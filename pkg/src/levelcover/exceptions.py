"""Exception hierarchy. Every error raised by the package derives from LevelCoverError."""


class LevelCoverError(ValueError):
    pass


class InvalidPolygonError(LevelCoverError):
    pass


class InvalidConfigError(LevelCoverError):
    pass


class InvalidResolutionError(LevelCoverError):
    pass


class AreaTooLargeError(LevelCoverError):
    def __init__(self, message, required_multiple):
        super().__init__(message)
        self.required_multiple = required_multiple


class NoSuperSquareError(LevelCoverError):
    pass


class PlanningError(LevelCoverError):
    pass


class SynchronizationError(PlanningError):
    pass


class InvalidModeError(LevelCoverError):
    pass


class ProtocolError(LevelCoverError):
    pass


class ScenarioError(LevelCoverError):
    pass
