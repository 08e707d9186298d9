"""Exception types shared across the package."""


class BtteachError(Exception):
    """Base class for all package errors."""


class ObjectNotFound(BtteachError):
    """An object id was not present in the world."""


class FrameNotFound(BtteachError):
    """A frame id could not be resolved."""


class PrimitiveRejected(BtteachError):
    """A manipulation primitive's world-level precondition was violated."""


class SceneInvalid(BtteachError):
    """A scene document failed validation."""


class ParseError(BtteachError):
    """A serialized document failed schema validation.

    Carries the path of the offending element when known.
    """

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{message} (at {path})" if path else message)
        self.path = path


class MigrationError(BtteachError):
    """A stored document has a schema version newer than this build understands."""


class TreeInvalid(BtteachError):
    """A behavior tree violates structural rules."""


class DemoInvalid(BtteachError):
    """A demonstration failed causality or schema validation."""

    def __init__(self, message: str, rule: str = "", index: int = -1):
        super().__init__(message)
        self.rule = rule
        self.index = index


class TemplateError(BtteachError):
    """An action template could not be instantiated."""


class GoalEmpty(BtteachError):
    """Goal inference produced no conditions for a demonstration."""


class Unachievable(BtteachError):
    """No known action can achieve a failed condition."""


class PlanBudgetExceeded(BtteachError):
    """The planner ran out of its expansion or tick budget."""


class PlanConflictLoop(BtteachError):
    """Conflict resolution oscillated or hit the leftmost position while regressing."""


class WorkspaceError(BtteachError):
    """Workspace layout or index problem."""
