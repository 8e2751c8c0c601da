"""Run configuration with the published defaults.

Config files are flat "key = value" text; CLI --set overrides win over the
file, which wins over defaults. The resolved config is echoed into every run
report so deviations are auditable.
"""

import dataclasses
from dataclasses import dataclass

from .errors import ContractError, ParseError


@dataclass
class RunConfig:
    embed_dim: int = 200
    hidden: int = 100
    layers: int = 2
    dropout: float = 0.5
    lr: float = 0.0001
    beam: int = 5
    max_context: int = 100
    max_question: int = 20
    max_answer: int = 20
    vocab_cutoff: int = 10
    delta_decrement: int = 2
    delta_floor: int = 2
    seed: int = 0
    batch_size: int = 32

    def to_dict(self):
        return dataclasses.asdict(self)

    def apply(self, overrides):
        fields = {f.name: f.type for f in dataclasses.fields(self)}
        for key, raw in overrides.items():
            if key not in fields:
                raise ContractError(f"unknown config key {key!r}")
            current = getattr(self, key)
            try:
                setattr(self, key, type(current)(raw))
            except ValueError as exc:
                raise ContractError(f"bad value for {key}: {raw!r}") from exc
        return self


def load_config(path=None, overrides=None):
    """Defaults <- file <- overrides."""
    cfg = RunConfig()
    if path:
        file_overrides = {}
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParseError("expected 'key = value'", line=lineno)
                key, _, value = line.partition("=")
                file_overrides[key.strip()] = value.strip()
        cfg.apply(file_overrides)
    if overrides:
        cfg.apply(overrides)
    return cfg
