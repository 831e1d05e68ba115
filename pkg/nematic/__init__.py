"""Create Solver"""

import logging
from importlib import import_module
from os import getenv, path
from typing import Any, Mapping, Optional

from rich.logging import RichHandler


__version__ = "0.4.1"

basedir = path.abspath(path.join(path.dirname(__file__), path.pardir))
logger = logging.getLogger("nematic")


class Settings(dict):
    """Upper-case configuration mapping with attribute access."""

    def __getattr__(self, name: str) -> Any:
        try:
            return self[name]
        except KeyError as exc:
            raise AttributeError(name) from exc

    def from_object(self, obj: Any) -> None:
        if isinstance(obj, str):
            module_name, _, attr = obj.rpartition(".")
            obj = getattr(import_module(module_name), attr)
        for key in dir(obj):
            if key.isupper():
                self[key] = getattr(obj, key)

    def from_pyfile(self, filename: str, silent: bool = False) -> bool:
        namespace: dict = {"__file__": filename}
        try:
            with open(filename, "rb") as config_file:
                exec(compile(config_file.read(), filename, "exec"), namespace)
        except OSError:
            if silent:
                return False
            raise
        self.from_mapping(namespace)
        return True

    def from_mapping(self, mapping: Mapping[str, Any]) -> None:
        for key, value in mapping.items():
            if key.isupper():
                self[key] = value


def configure_logging(level: str = "INFO") -> None:
    if any(isinstance(h, RichHandler) for h in logger.handlers):
        logger.setLevel(level)
        return
    handler = RichHandler(show_path=False, rich_tracebacks=True)
    handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    logger.addHandler(handler)
    logger.setLevel(level)


def create_solver(config_name: Optional[str] = None) -> Settings:
    if config_name is None:
        config_name = getenv("NEMATIC_CONFIG", "development")
    settings = Settings()
    settings.from_object(f"config.{config_name.capitalize()}Config")
    settings.from_pyfile(path.join(basedir, "instance", "config.py"), silent=True)
    settings["CONFIG_NAME"] = config_name
    configure_logging(settings["LOG_LEVEL"])
    logger.debug(f"Solver settings loaded from {config_name} configuration")
    return settings
