"""Run configuration files - load, validate and save RunConfig documents."""

import json
from pathlib import Path

from pydantic import ValidationError

from . import CONFIG_SCHEMA_VERSION
from .errors import ConfigError
from .models import RunConfig


def _describe(err: ValidationError) -> list[str]:
    problems = []
    for e in err.errors():
        where = ".".join(str(p) for p in e["loc"]) or "config"
        msg = str(e["msg"]).removeprefix("Value error, ")
        problems.append(f"{where}: {msg}")
    return problems


def load_config_text(file: str | Path) -> str:
    """Read a config file as text."""
    path = Path(file)
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError([f"cannot read {path}: {e.strerror or e}"]) from e


def parse_config_text(text: str, source: str = "config") -> RunConfig:
    """
    Validate a JSON config document.

    Args:
        text: JSON text
        source: Name used in error messages

    Returns:
        Fully validated RunConfig

    Raises:
        ConfigError: Listing every problem found
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"{source}: not valid JSON ({e.msg} at line {e.lineno})"]) from e
    if not isinstance(data, dict):
        raise ConfigError([f"{source}: top level must be an object"])

    problems: list[str] = []
    version = data.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        problems.append(
            f"schema_version: expected {CONFIG_SCHEMA_VERSION!r}, got {version!r}"
        )

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        problems.extend(_describe(e))
        raise ConfigError(problems) from e

    if problems:
        raise ConfigError(problems)
    return config


def parse_config(file: str | Path) -> RunConfig:
    """
    Load and validate a config file.

    Raises:
        ConfigError: If the file cannot be read or fails validation
    """
    return parse_config_text(load_config_text(file), source=str(file))


def dump_config(config: RunConfig, file: str | Path) -> None:
    """Write config as JSON; parse_config reads it back to an equal RunConfig."""
    path = Path(file)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.model_dump(mode="json"), f, indent=2, ensure_ascii=False)
        f.write("\n")
