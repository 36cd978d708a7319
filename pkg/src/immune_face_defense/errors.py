"""Exception types shared across the defense pipeline."""


class CorpusError(ValueError):
    """Face corpus cannot be read or cannot satisfy a pair protocol."""


class UndefinedCosineError(ValueError):
    """Cosine similarity requested for a zero-norm vector."""


class NonFiniteError(ArithmeticError):
    """A forward activation or gradient contains NaN or infinity."""


class EmbedderTrainingError(RuntimeError):
    """The toy embedder did not reach its verification target."""

    def __init__(self, message: str, best_eer: float) -> None:
        super().__init__(message)
        self.best_eer = best_eer


class ConfigValidationError(ValueError):
    """Experiment configuration is inconsistent."""
