"""Pipeline configuration: JSON schema, defaults and loading.

Config files are JSON with a mandatory ``schema_version`` field; every
other field falls back to the defaults below.  The module-level constants
mirror the stated method parameters: Gaussian smoothing sigma 0.8 for F0
gradients and 1.0 for velocity gradients, the 2% calibration miss rate,
the 0.02 s / 10 Hz contour interpolation rule (in :mod:`pitch`), and a
prominence threshold default inside the reported 0.7-1.1 user range.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import jsonschema

from .corpus import SyntheticRecipe
from .errors import ConfigError
from .pitch import PitchConfig
from .signal_io import read_json

SCHEMA_VERSION = 1

DEFAULT_N_STATES = {
    "Preparation": 3,
    "PointStroke": 4,
    "ContourStroke": 4,
    "CircleStroke": 4,
    "Hold": 2,
    "Retraction": 3,
}


@dataclass(frozen=True)
class ProminenceParams:
    sigma_pitch: float = 0.8
    sigma_velocity: float = 1.0
    target_miss_rate: float = 0.02
    threshold_d2: float = 0.9


@dataclass(frozen=True)
class HmmParams:
    n_states: dict = field(default_factory=lambda: dict(DEFAULT_N_STATES))
    insertion_penalty: float = -20.0
    covariance_type: str = "diag"
    max_iterations: int = 100
    tolerance: float = 1e-4


@dataclass(frozen=True)
class FusionParams:
    mode: str = "fused"
    min_duration_s: float = 0.12
    max_duration_s: float = 3.0


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 20260810
    speaker_id: str = "synthetic"
    train_fraction: float = 0.36
    jobs: int = 1
    pitch: PitchConfig = field(default_factory=PitchConfig)
    prominence: ProminenceParams = field(default_factory=ProminenceParams)
    hmm: HmmParams = field(default_factory=HmmParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    corpus: SyntheticRecipe = field(default_factory=SyntheticRecipe)


_NUMBER = {"type": "number"}
_RANGE = {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer"},
        "speaker_id": {"type": "string"},
        "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "jobs": {"type": "integer", "minimum": 1},
        "pitch": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "f0_floor": _NUMBER,
                "f0_ceiling": _NUMBER,
                "window_s": _NUMBER,
                "hop_s": _NUMBER,
                "voicing_threshold": _NUMBER,
                "octave_cost": _NUMBER,
                "octave_jump_cost": _NUMBER,
                "transition_cost": _NUMBER,
                "max_candidates": {"type": "integer", "minimum": 1},
            },
        },
        "prominence": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sigma_pitch": _NUMBER,
                "sigma_velocity": _NUMBER,
                "target_miss_rate": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "threshold_d2": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "hmm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_states": {
                    "type": "object",
                    "additionalProperties": {"type": "integer", "minimum": 1},
                },
                "insertion_penalty": _NUMBER,
                "covariance_type": {"enum": ["diag", "full"]},
                "max_iterations": {"type": "integer", "minimum": 1},
                "tolerance": _NUMBER,
            },
        },
        "fusion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["fused", "gesture-only"]},
                "min_duration_s": _NUMBER,
                "max_duration_s": _NUMBER,
            },
        },
        "corpus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer"},
                "n_recordings": {"type": "integer", "minimum": 0},
                "n_gesture_units": {"type": "integer", "minimum": 0},
                "frame_rate": _NUMBER,
                "sample_rate": {"type": "integer"},
                "speaker_id": {"type": "string"},
                "phoneme_durations": {"type": "object", "additionalProperties": _RANGE},
                "kinematics": {"type": "object"},
                "alignment": {"type": "object"},
                "stroke_weights": {"type": "object", "additionalProperties": _NUMBER},
                "prominence_rate": _NUMBER,
                "hold_probability": _NUMBER,
                "stroke_chain_probability": _NUMBER,
                "base_f0_hz": _NUMBER,
                "accent_rise_hz": _RANGE,
                "filler_rise_hz": _RANGE,
                "accent_pause_s": _RANGE,
                "filler_gap_s": _RANGE,
                "filler_duration_s": _RANGE,
                "tracking_noise": _NUMBER,
            },
        },
    },
}


def _build(cls, doc: dict):
    kwargs = {}
    for f in fields(cls):
        if f.name in doc:
            kwargs[f.name] = doc[f.name]
    return cls(**kwargs)


def config_from_dict(doc: dict) -> PipelineConfig:
    """Validate a raw config document and build a PipelineConfig."""
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"field {path!r}: {exc.message}") from exc

    merged = dict(doc)
    merged.pop("schema_version")
    sections = {
        "pitch": PitchConfig,
        "prominence": ProminenceParams,
        "hmm": HmmParams,
        "fusion": FusionParams,
        "corpus": SyntheticRecipe,
    }
    kwargs = {}
    for key, value in merged.items():
        if key in sections:
            kwargs[key] = _build(sections[key], value)
        else:
            kwargs[key] = value
    return _build(PipelineConfig, {**kwargs})


def load_config(path) -> PipelineConfig:
    """Load and validate a pipeline config file (ConfigError on any problem)."""
    try:
        doc = read_json(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "schema_version" not in doc:
        raise ConfigError("field 'schema_version': required field is missing")
    return config_from_dict(doc)


def default_config() -> PipelineConfig:
    return PipelineConfig()
