"""
Experiment configuration modules.

A configuration is a plain Python file of UPPER_CASE settings. Without an
explicit path, ``config.py`` at the project root is used, then
``config.example.py``.
"""

from __future__ import annotations

import importlib.util
from pathlib import Path
from types import ModuleType
from typing import Any, Dict

CONFIG_CANDIDATES = ("config.py", "config.example.py")


def _exec_config(path: Path) -> ModuleType:
    name = "electrosense_config_" + path.stem.replace(".", "_").replace("-", "_")
    spec = importlib.util.spec_from_file_location(name, str(path))
    if spec is None or spec.loader is None:
        raise ImportError(f"Cannot import configuration {path}")
    module = importlib.util.module_from_spec(spec)
    try:
        spec.loader.exec_module(module)
    except Exception as e:
        raise ImportError(f"Configuration {path} failed to load: {e}") from e
    return module


def project_root() -> Path:
    """Repository root: the directory above the ``electrosense`` package."""
    return Path(__file__).resolve().parents[1]


def load_config(root: Path | None = None, path: Path | str | None = None) -> ModuleType:
    """
    Load an experiment configuration as a module.

    ``path`` wins when given and must exist. Otherwise the first of
    ``config.py`` and ``config.example.py`` found under ``root`` (default:
    the project root) is loaded.
    """
    if path is not None:
        explicit = Path(path)
        if not explicit.is_file():
            raise FileNotFoundError(f"Configuration file not found: {explicit}")
        return _exec_config(explicit)

    base = project_root() if root is None else root.resolve()
    for candidate in CONFIG_CANDIDATES:
        if (base / candidate).is_file():
            return _exec_config(base / candidate)
    raise FileNotFoundError(
        f"No configuration file found under {base}; expected one of {', '.join(CONFIG_CANDIDATES)}"
    )


def settings(config: Any) -> Dict[str, Any]:
    """UPPER_CASE attributes of a config module or namespace, sorted by name."""
    return {name: getattr(config, name) for name in sorted(vars(config)) if name.isupper()}


try:
    config: Any = load_config()
except FileNotFoundError:
    config = None
