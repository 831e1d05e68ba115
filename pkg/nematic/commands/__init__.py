import click

from nematic import configure_logging, create_solver
from nematic.commands.check import check
from nematic.commands.field import export_glyphs, solve_field
from nematic.commands.perturb import perturb
from nematic.commands.radial import solve_radial
from nematic.commands.sweep import sweep


@click.group("nematic")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]), help="Override LOG_LEVEL.")
@click.pass_context
def cli(ctx: click.Context, log_level) -> None:
    """Defect profiles of the two-constant Landau-de Gennes energy on a disk."""
    if ctx.obj is None:
        ctx.obj = create_solver()
    if log_level:
        ctx.obj["LOG_LEVEL"] = log_level
        configure_logging(log_level)


cli.add_command(solve_radial)
cli.add_command(solve_field)
cli.add_command(export_glyphs)
cli.add_command(perturb)
cli.add_command(sweep)
cli.add_command(check)
