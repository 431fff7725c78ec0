# Run configuration
# Resolves every tunable from CLI overrides, then OOP_* environment variables
# (a .env file is loaded first), then defaults

import hashlib
import json
import os
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import InputError
from .models import AffinityWeighting, Limits, SelfLoopPolicy, StaticWeightPolicy


# Load environment variables from .env file
load_dotenv()

ENV_PREFIX = "OOP_"
LOG_LEVEL = os.getenv("OOP_LOG_LEVEL", "INFO")


class RunConfig(BaseModel):
    """Every knob that influences command output; echoed into report headers"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = 0
    callsite_cap: int = Field(default=100, ge=1)  # call sites sampled per method
    back_edge_probability: float = Field(default=0.9, gt=0.0, lt=1.0)  # loops run ~10 times
    window: int = Field(default=8, ge=2)
    max_events: int = Field(default=10_000_000, ge=1)  # trace size cap
    max_steps: int = Field(default=100_000_000, ge=1)
    selfloop_policy: SelfLoopPolicy = SelfLoopPolicy.EQUAL
    affinity_weighting: AffinityWeighting = AffinityWeighting.PROBABILITY
    strict_termination: bool = False
    min_calls: int = Field(default=0, ge=0)
    per_site_cap: int = Field(default=1000, ge=1)
    config_set_cap: int = Field(default=4096, ge=1)
    reference_fields_only: bool = False

    @property
    def limits(self) -> Limits:
        return Limits(max_events=self.max_events, max_steps=self.max_steps)

    @property
    def static_policy(self) -> StaticWeightPolicy:
        return StaticWeightPolicy(back_edge_probability=self.back_edge_probability)

    def header(self) -> str:
        """Compact JSON form used in report headers and manifests"""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def derive_seed(self, stage: str) -> int:
        """Independent sub-seed for one named pipeline stage"""
        digest = hashlib.sha256(f"{self.seed}:{stage}".encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big")


def _from_environment() -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for name in RunConfig.model_fields:
        raw = os.getenv(ENV_PREFIX + name.upper())
        if raw is not None and raw.strip() != "":
            values[name] = raw.strip()
    return values


def load_run_config(overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Merge environment values with explicit overrides; None overrides are ignored"""
    values = _from_environment()
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig.model_validate(values)
    except ValidationError as exc:
        raise InputError(f"invalid configuration: {exc}") from exc
