"""Training spec: a flat TOML file validated strictly, all errors at once.

Unknown keys are rejected so a misspelled hyperparameter fails loudly
instead of silently training with a default.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class SpecError(Exception):
    """One or more spec problems; the message lists all of them."""


@dataclass
class TrainSpec:
    checkpoint: str
    weak_labels: str
    corpus: str
    output_dir: str
    scorer_id: str
    max_sequence_tokens: int = 4096
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epochs: int = 3
    batch_size: int = 16
    seed: int = 0


_REQUIRED = ("checkpoint", "weak_labels", "corpus", "output_dir")

_OPTIONAL: dict[str, tuple[type, object]] = {
    "scorer_id": (str, None),
    "max_sequence_tokens": (int, 4096),
    "learning_rate": (float, 1e-4),
    "adam_beta1": (float, 0.9),
    "adam_beta2": (float, 0.999),
    "epochs": (int, 3),
    "batch_size": (int, 16),
    "seed": (int, 0),
}

# paths resolved against the spec file's directory when relative
_PATH_KEYS = ("checkpoint", "weak_labels", "corpus", "output_dir")


def load_spec(path: str) -> TrainSpec:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise SpecError(f"spec file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"{path} is not valid TOML: {exc}")

    errors: list[str] = []
    values: dict[str, object] = {}

    for key in _REQUIRED:
        if key not in raw:
            errors.append(f"{key} is required")
        elif not isinstance(raw[key], str):
            errors.append(f"{key}: expected string, got {raw[key]!r}")
        else:
            values[key] = raw[key]

    for key, (kind, default) in _OPTIONAL.items():
        if key not in raw:
            values[key] = default
            continue
        value = raw[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or isinstance(value, bool):
            errors.append(f"{key}: expected {kind.__name__}, got {value!r}")
        else:
            values[key] = value

    for key in raw:
        if key not in _REQUIRED and key not in _OPTIONAL:
            errors.append(f"unknown key {key!r}")

    if not errors:
        if values["max_sequence_tokens"] <= 0:  # type: ignore[operator]
            errors.append("max_sequence_tokens must be positive")
        if values["learning_rate"] <= 0:  # type: ignore[operator]
            errors.append("learning_rate must be positive")
        for key in ("adam_beta1", "adam_beta2"):
            if not (0.0 <= values[key] < 1.0):  # type: ignore[operator]
                errors.append(f"{key} must lie in [0, 1)")
        if values["epochs"] <= 0:  # type: ignore[operator]
            errors.append("epochs must be positive")
        if values["batch_size"] <= 0:  # type: ignore[operator]
            errors.append("batch_size must be positive")

    if errors:
        raise SpecError("invalid training spec:\n  - " + "\n  - ".join(errors))

    base = os.path.dirname(os.path.abspath(path))
    for key in _PATH_KEYS:
        p = values[key]
        if not os.path.isabs(p):  # type: ignore[arg-type]
            values[key] = os.path.normpath(os.path.join(base, p))  # type: ignore[arg-type]

    if values["scorer_id"] is None:
        values["scorer_id"] = os.path.basename(os.path.normpath(values["checkpoint"]))  # type: ignore[arg-type]

    return TrainSpec(**values)  # type: ignore[arg-type]
