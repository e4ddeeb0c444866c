"""Exception types raised across the pipeline."""


class ConfigurationError(ValueError):
    """Invalid mechanism, codec, detector or harness configuration."""


class RejectedInputError(ValueError):
    """A raw record lies outside the mechanism's declared input domain."""


class DegenerateInputError(ValueError):
    """Horvitz-Thompson sparsification was asked to sample from an all-zero vector."""


class ContractViolationError(ValueError):
    """A 1-sparse mechanism produced a vector with more than one active coordinate."""


class RestorationError(ValueError):
    """Restore was applied to an all-zero reconstruction."""


class CodecConstructionError(RuntimeError):
    """No well-conditioned projection could be drawn within the retry budget."""


class StageError(RuntimeError):
    """A pipeline stage failed for a specific client."""

    def __init__(self, stage: str, client_id: int, cause: Exception):
        self.stage = stage
        self.client_id = client_id
        self.cause = cause
        super().__init__(f"stage '{stage}' failed for client {client_id}: {cause}")
