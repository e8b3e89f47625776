"""
Settings management.

Tolerances, caps and algorithm defaults live in a JSON file under the
user's config directory. The qubit cap can be overridden from the
environment for one-off large runs.
"""

import json
import os
from collections.abc import Mapping
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from qmldesk.errors import ConfigError

APP_NAME = "qmldesk"
QUBIT_CAP_ENV = "QMLDESK_QUBIT_CAP"


@dataclass(frozen=True)
class Settings:
    """Simulator tolerances and algorithm defaults."""

    # 20 qubits is 16 MB of complex128 amplitudes
    qubit_cap: int = 20

    norm_tol: float = 1e-10
    hermitian_tol: float = 1e-10
    psd_tol: float = 1e-9
    unitary_tol: float = 1e-10

    # Minimum finding gives up after budget * sqrt(N) oracle queries
    durr_hoyer_budget: float = 22.5

    # Adaptive stopping for distance comparisons: |D_A - D_B| > z * SE
    adaptive_stopping: bool = False
    adaptive_z: float = 3.0
    adaptive_max_rounds: int = 20

    retained_rank_threshold: float = 0.01

    mean_field_damping: float = 0.5
    mean_field_tol: float = 1e-8
    mean_field_max_sweeps: int = 500
    boltzmann_max_units: int = 20
    gibbs_kappa: float = 1.0

    max_workers: int = 4
    report_digits: int = 12

    def to_dict(self) -> dict:
        """Convert to dict for storage."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "Settings":
        """Create from dict, ignoring unknown keys and defaulting missing ones."""
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def with_env(self, environ: Mapping[str, str] | None = None) -> "Settings":
        """
        Apply environment overrides.

        Args:
            environ: Environment mapping. Defaults to os.environ

        Returns:
            Settings with QMLDESK_QUBIT_CAP applied if set

        Raises:
            ConfigError: If the override is not a positive integer
        """
        environ = os.environ if environ is None else environ
        raw = environ.get(QUBIT_CAP_ENV)
        if raw is None or raw == "":
            return self
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"{QUBIT_CAP_ENV} must be an integer, got {raw!r}") from None
        if cap < 1:
            raise ConfigError(f"{QUBIT_CAP_ENV} must be >= 1, got {cap}")
        return replace(self, qubit_cap=cap)


def parse_assignment(text: str) -> tuple[str, object]:
    """
    Parse NAME=VALUE into a setting name and a value of the setting's type.

    Raises:
        ConfigError: If the name is unknown or the value does not convert
    """
    name, sep, raw = text.partition("=")
    name = name.strip().replace("-", "_")
    if not sep or not name:
        raise ConfigError(f"Expected NAME=VALUE, got {text!r}")
    defaults = Settings()
    if not hasattr(defaults, name):
        raise ConfigError(f"Unknown setting: {name}")

    kind = type(getattr(defaults, name))
    raw = raw.strip()
    if kind is bool:
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"{name} must be true or false, got {raw!r}")
        return name, raw.lower() in ("true", "1", "yes")
    try:
        return name, kind(raw)
    except ValueError:
        raise ConfigError(f"{name} must be {kind.__name__}, got {raw!r}") from None


def resolve(settings: Settings | None) -> Settings:
    """Return the given settings, or defaults with environment overrides."""
    if settings is not None:
        return settings
    return Settings().with_env()


class SettingsManager:
    """
    Loads and saves settings in the user's config directory.

    A missing or corrupted settings file yields defaults.
    """

    def __init__(self, config_dir: Path | None = None):
        """
        Initialize the settings manager.

        Args:
            config_dir: Directory to store config. Defaults to ~/.config/qmldesk
        """
        if config_dir is None:
            config_dir = Path.home() / ".config" / APP_NAME

        self.config_dir = config_dir
        self.config_dir.mkdir(parents=True, exist_ok=True)
        self.settings_file = self.config_dir / "settings.json"

        self._settings = Settings()
        self._load()

    def _load(self) -> None:
        """Load settings from disk."""
        if self.settings_file.exists():
            try:
                with open(self.settings_file) as f:
                    data = json.load(f)
                self._settings = Settings.from_dict(data.get("settings", {}))
            except (json.JSONDecodeError, AttributeError, TypeError):
                # Corrupted file, start fresh
                self._settings = Settings()

    def _save(self) -> None:
        """Save settings to disk."""
        data = {"settings": self._settings.to_dict()}
        with open(self.settings_file, "w") as f:
            json.dump(data, f, indent=2)

    @property
    def stored(self) -> Settings:
        """Settings as stored on disk, without environment overrides."""
        return self._settings

    def current(self, environ: Mapping[str, str] | None = None) -> Settings:
        """Settings with environment overrides applied."""
        return self._settings.with_env(environ)

    def update(self, **changes) -> Settings:
        """
        Change and persist settings.

        Args:
            **changes: Setting names and new values

        Returns:
            The updated settings

        Raises:
            ConfigError: If a name is not a known setting
        """
        known = {f.name for f in fields(Settings)}
        unknown = sorted(set(changes) - known)
        if unknown:
            raise ConfigError(f"Unknown settings: {', '.join(unknown)}")
        self._settings = replace(self._settings, **changes)
        self._save()
        return self._settings

    def reset(self) -> Settings:
        """Restore defaults and persist them."""
        self._settings = Settings()
        self._save()
        return self._settings
