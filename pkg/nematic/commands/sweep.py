import logging
import os

import click
from rich.table import Table

from nematic.checkpoints import write_rows
from nematic.commands.common import EXIT_UNRESOLVED, console, finish, handles_errors, merge_options, output_folder
from nematic.sweep import DIAGRAM_COLUMNS, SweepConfig, continuation_sweep, detect_transitions, diagram_rows, transition_rows


logger = logging.getLogger(__name__)


@click.command("sweep")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), help="JSON file with SweepConfig keys.")
@click.option("--a2", type=float)
@click.option("--b2", type=float)
@click.option("--c2", type=float)
@click.option("--L", "L", type=float)
@click.option("--k", type=int)
@click.option("--M", "M_grid", type=float, multiple=True, help="Grid value of M; repeat for more.")
@click.option("--R", "R_grid", type=float, multiple=True, help="Grid value of R; repeat for more.")
@click.option("--branch", "branches", multiple=True, help="Branch preset; repeat for more.")
@click.option("--workers", type=int)
@click.option("--output-dir", type=click.Path(file_okay=False))
@click.pass_context
@handles_errors
def sweep(ctx: click.Context, config_file, **flags) -> None:
    """Continuation in M at each R over every branch, then the global minimiser and transitions."""
    flags = {key: (list(value) if isinstance(value, tuple) else value) for key, value in flags.items()}
    flags = {key: value for key, value in flags.items() if value != []}
    options = merge_options(config_file, flags)
    folder = output_folder(ctx, options, "sweep")
    options["output_dir"] = folder
    cfg = SweepConfig.from_mapping(options, ctx.obj)

    diagram = continuation_sweep(cfg)
    transitions = detect_transitions(diagram)
    outputs = [
        write_rows(os.path.join(folder, "phase_diagram.csv"), DIAGRAM_COLUMNS, diagram_rows(diagram)),
        write_rows(
            os.path.join(folder, "transitions.csv"),
            ("R", "M_low", "M_high", "before", "after", "kind", "branch"),
            transition_rows(transitions),
        ),
    ]
    outputs += sorted({r.checkpoint for r in diagram.records if r.checkpoint})

    table = Table(title="Global minimisers")
    table.add_column("R", justify="right")
    table.add_column("M", justify="right")
    table.add_column("label")
    table.add_column("energy", justify="right")
    for (M, R), best in sorted(diagram.minimizers.items(), key=lambda item: (item[0][1], item[0][0])):
        tie = f" (tie: {', '.join(best.ties)})" if best.ties else ""
        table.add_row(f"{R:g}", f"{M:g}", (best.label or "[red]unresolved[/red]") + tie, f"{best.energy:.10g}")
    console.print(table)
    for t in transitions:
        console.print(f"R={t.R:g}: {t.before} -> {t.after} in ({t.M_low:g}, {t.M_high:g}) [{t.kind}]")

    finish(ctx, folder, cfg.as_dict(), outputs)
    if diagram.unresolved:
        logger.warning(f"Unresolved sweep points: {diagram.unresolved}")
        ctx.exit(EXIT_UNRESOLVED)
