from __future__ import annotations

from dataclasses import asdict, dataclass

from derailcast.errors import ConfigError

DEFAULT_STOP_MARKER = "<END_OF_CONVERSATION>"


@dataclass(frozen=True)
class GenerationParams:
    """Sampling knobs for one generate call."""

    temperature: float = 1.0
    top_p: float = 0.9
    repetition_penalty: float = 1.05
    max_new_tokens: int = 256
    stop_marker: str = DEFAULT_STOP_MARKER

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ConfigError(f"top_p must lie in (0, 1], got {self.top_p}")
        if not self.repetition_penalty >= 1:
            raise ConfigError(f"repetition_penalty must be >= 1, got {self.repetition_penalty}")
        if isinstance(self.max_new_tokens, bool) or int(self.max_new_tokens) != self.max_new_tokens or self.max_new_tokens < 1:
            raise ConfigError(f"max_new_tokens must be a positive integer, got {self.max_new_tokens}")
        if not self.stop_marker:
            raise ConfigError("stop_marker must be non-empty")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationParams":
        return cls(**data)
