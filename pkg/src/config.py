"""Settings for PruferLab: defaults, JSON config file, environment, CLI flags."""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

logger = logging.getLogger(__name__)

CONFIG_FILENAME = ".pruferlab_config.json"
OUTPUT_FORMATS = ("csv", "json", "xlsx")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

ENV_VARS = {
    "PRUFERLAB_WORKERS": "workers",
    "PRUFERLAB_ENUM_CAP": "enumeration_cap",
    "PRUFERLAB_LOG_LEVEL": "log_level",
}


class ConfigError(Exception):
    """Raised when a config file, environment variable or flag holds a bad value."""
    pass


@dataclass(frozen=True)
class Settings:
    """Resolved run settings."""

    workers: int = 1
    enumeration_cap: int = 9
    max_ell_tracked: int = 64
    confidence: float = 0.95
    output_format: str = "csv"
    log_level: str = "WARNING"

    def __post_init__(self):
        """Validate every field."""
        for name in ("workers", "enumeration_cap", "max_ell_tracked"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.confidence, bool) or not isinstance(self.confidence, (int, float)) \
                or not 0 < self.confidence < 1:
            raise ConfigError(f"confidence must lie in (0, 1), got {self.confidence!r}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(f"output_format must be one of {', '.join(OUTPUT_FORMATS)}, "
                              f"got {self.output_format!r}")
        level = str(self.log_level).upper()
        if level not in LOG_LEVELS:
            raise ConfigError(f"log_level must be one of {', '.join(LOG_LEVELS)}, got {self.log_level!r}")
        object.__setattr__(self, "log_level", level)

    def merged(self, overrides: Mapping[str, Any]) -> "Settings":
        """Copy with the non-None overrides applied."""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"Unknown setting(s): {', '.join(sorted(unknown))}")
        values = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **values) if values else self

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


def read_config_file(path: str | Path) -> Dict[str, Any]:
    """
    Read settings from a JSON object file.

    Raises:
        ConfigError: If the file is not valid JSON or not an object
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def read_environment(environ: Mapping[str, str]) -> Dict[str, Any]:
    """Settings taken from PRUFERLAB_* environment variables."""
    values: Dict[str, Any] = {}
    for var, name in ENV_VARS.items():
        raw = environ.get(var)
        if raw is None or raw == "":
            continue
        if name == "log_level":
            values[name] = raw
            continue
        try:
            values[name] = int(raw)
        except ValueError:
            raise ConfigError(f"{var}={raw!r} is not an integer")
    return values


def load_settings(config_path: Optional[str | Path] = None,
                  environ: Optional[Mapping[str, str]] = None,
                  overrides: Optional[Mapping[str, Any]] = None) -> Settings:
    """
    Resolve settings: defaults, then the JSON file, then environment, then overrides.

    Args:
        config_path: JSON file; defaults to .pruferlab_config.json in the working
            directory, which is skipped when absent
        environ: Environment mapping (os.environ when None)
        overrides: Values from CLI flags; None entries are ignored

    Raises:
        ConfigError: On any malformed source
    """
    settings = Settings()
    explicit = config_path is not None
    path = Path(config_path) if explicit else Path.cwd() / CONFIG_FILENAME
    if path.exists():
        logger.debug("Reading settings from %s", path)
        settings = settings.merged(read_config_file(path))
    elif explicit:
        raise ConfigError(f"Config file {path} does not exist")
    settings = settings.merged(read_environment(os.environ if environ is None else environ))
    if overrides:
        settings = settings.merged(overrides)
    return settings
