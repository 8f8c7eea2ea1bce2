"""Exception hierarchy. Library modules raise these; main.py maps them to exit codes."""


class SceneSynthError(Exception):
    """Base class for every failure raised by the pipeline."""


class GrammarError(SceneSynthError, ValueError):
    """Malformed grammar document or runaway derivation."""


class EnergyError(SceneSynthError, ValueError):
    """Energy evaluation got inputs outside its domain (sampler/grammar bug)."""


class LearningError(SceneSynthError, ValueError):
    """Training data or estimator preconditions violated."""


class SamplerError(SceneSynthError):
    """Chain state became inconsistent."""


class SceneError(SceneSynthError):
    """Instantiation failure (catalog miss, support cycle, residual overlap)."""


class RenderError(SceneSynthError, ValueError):
    """Camera spec or frame problem."""


class ValidationError(SceneSynthError, ValueError):
    """A file failed schema or invariant checks."""

    def __init__(self, message, findings=None):
        super().__init__(message)
        self.findings = list(findings or [])


class UsageError(SceneSynthError):
    """Bad invocation: missing input path, missing required option."""
