"""Shared plumbing for the subcommands: option sets, config merging, output folders and exit codes."""

from __future__ import annotations

import logging
import os
from functools import wraps
from typing import Any, Callable, Mapping, Optional

import click
from rich.console import Console
from rich.table import Table

from nematic.checkpoints import PARAM_KEYS, read_json, write_manifest
from nematic.errors import NematicError
from nematic.tensors import MaterialParams


logger = logging.getLogger(__name__)

console = Console()

EXIT_OK, EXIT_FAILED, EXIT_UNRESOLVED = 0, 1, 2


def param_options(f: Callable) -> Callable:
    """--a2 --b2 --c2 --L --M --k --R; unset flags fall back to the config file, then to the defaults."""
    options = [
        click.option("--a2", type=float, help="Bulk constant a^2."),
        click.option("--b2", type=float, help="Bulk constant b^2."),
        click.option("--c2", type=float, help="Bulk constant c^2."),
        click.option("--L", "L", type=float, help="One-constant elastic coefficient."),
        click.option("--M", "M", type=float, help="Anisotropic elastic coefficient."),
        click.option("--k", type=int, help="Winding number of the boundary data."),
        click.option("--R", "R", type=float, help="Disk radius."),
        click.option("--config", "config_file", type=click.Path(dir_okay=False), help="JSON config file."),
        click.option("--output-dir", type=click.Path(file_okay=False), help="Folder for CSV and JSON outputs."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def handles_errors(f: Callable) -> Callable:
    """Invalid input and unreadable files end the command with exit code 1."""

    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except NematicError as exc:
            logger.error(f"{type(exc).__name__}: {exc}")
            click.get_current_context().exit(EXIT_FAILED)

    return wrapper


def merge_options(config_file: Optional[str], flags: Mapping[str, Any]) -> dict:
    merged: dict = {}
    if config_file:
        merged.update(read_json(config_file))
    merged.update({key: value for key, value in flags.items() if value is not None})
    return merged


def material_params(options: Mapping[str, Any], **overrides: Any) -> MaterialParams:
    values = {key: options[key] for key in PARAM_KEYS if options.get(key) is not None}
    values.update(overrides)
    return MaterialParams(**values)


def output_folder(ctx: click.Context, options: Mapping[str, Any], name: str) -> str:
    base = options.get("output_dir") or ctx.obj["OUTPUT_DIR"]
    folder = os.path.join(base, name)
    os.makedirs(folder, exist_ok=True)
    return folder


def finish(ctx: click.Context, folder: str, parameters: Mapping[str, Any], outputs: list[str]) -> None:
    path = write_manifest(folder, ctx.command_path, parameters, outputs, ctx.obj)
    console.print(f"Wrote {len(outputs)} files and [bold]{os.path.relpath(path)}[/bold]")


def report_table(title: str, rows: Mapping[str, Any]) -> Table:
    table = Table(title=title)
    table.add_column("quantity", style="cyan")
    table.add_column("value", justify="right")
    for key, value in rows.items():
        table.add_row(key, f"{value:.10g}" if isinstance(value, float) else str(value))
    return table
