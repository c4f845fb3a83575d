"""Sidecar configuration, resolvable from flags or NLI_* env vars."""

from __future__ import annotations

import os
from dataclasses import dataclass

DEFAULT_MODEL = "cross-encoder/nli-deberta-v3-base"
DEBUG_MODEL = "debug"  # built-in deterministic lexical scorer, no checkpoint


@dataclass(frozen=True)
class SidecarConfig:
    model_identifier: str = DEFAULT_MODEL
    port: int = 8470
    max_batch: int = 32
    device: str = "cpu"

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")

    @classmethod
    def from_env(cls) -> "SidecarConfig":
        return cls(
            model_identifier=os.environ.get("NLI_MODEL", DEFAULT_MODEL),
            port=int(os.environ.get("NLI_PORT", "8470")),
            max_batch=int(os.environ.get("NLI_MAX_BATCH", "32")),
            device=os.environ.get("NLI_DEVICE", "cpu"),
        )
