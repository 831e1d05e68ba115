import logging
import os

import click

from nematic.checkpoints import beta_contour_export, read_field, read_profile, write_field, write_glyphs, write_json
from nematic.commands.common import (
    EXIT_FAILED,
    console,
    finish,
    handles_errors,
    material_params,
    merge_options,
    output_folder,
    param_options,
    report_table,
)
from nematic.field import FIELD_PRESETS, assemble_radial_field, classify_field, detect_defects, glyph_export, minimize_field
from nematic.mesh import build_mesh
from nematic.radial import PRESETS


logger = logging.getLogger(__name__)


@click.command("solve-field")
@param_options
@click.option("--init", help="Seed preset or a profile/field checkpoint to start from.")
@click.option("--h-fraction", type=float, help="Target mesh size as a fraction of R.")
@click.option("--optimizer", type=click.Choice(["lbfgs", "trust-ncg"]))
@click.option("--tol", type=float, help="Gradient tolerance per degree of freedom.")
@click.option("--max-iter", type=int)
@click.pass_context
@handles_errors
def solve_field(ctx: click.Context, config_file, **flags) -> None:
    """Minimise the full 2D energy on the disk and classify the minimiser."""
    options = merge_options(config_file, flags)
    params = material_params(options)
    settings = ctx.obj
    fraction = options.get("h_fraction") or settings["FIELD_TARGET_H_FRACTION"]
    mesh = build_mesh(params.R, fraction * params.R, settings["MAX_MESH_NODES"])

    init = options.get("init") or "interpolated"
    if init not in FIELD_PRESETS and init not in PRESETS:
        if not os.path.isfile(init):
            raise click.BadParameter(f"{init} is neither a preset nor a file", param_hint="--init")
        with open(init, encoding="utf-8") as f:
            kind = f.readline()
        init = read_field(init, mesh) if "kind=field" in kind else assemble_radial_field(read_profile(init), mesh, params)

    result = minimize_field(
        params, mesh, init=init,
        tol=options.get("tol") or settings["FIELD_GRADIENT_TOL"],
        max_iter=options.get("max_iter") or settings["FIELD_MAX_ITER"],
        optimizer=options.get("optimizer") or settings["FIELD_OPTIMIZER"],
    )
    s = params.s_plus
    verdict = classify_field(
        result.field, settings["SYMMETRY_TOL_FACTOR"] * s, settings["VERTICAL_TOL_FACTOR"] * s
    )
    defects = detect_defects(result.field, settings["BETA_TOL"])
    report = {
        "converged": result.converged,
        "iterations": result.iterations,
        "gradient_norm": result.gradient_norm,
        "energy": result.energy,
        "el_residual": result.el_norm,
        "label": verdict.radial_label or verdict.label,
        "symmetry_residual": verdict.symmetry_residual,
        "vertical_residual": verdict.vertical_residual,
        "defects": [[float(c) for c in d.position] for d in defects],
        "nodes": mesh.n_nodes,
    }

    folder = output_folder(ctx, options, "field")
    outputs = [
        write_field(result.field, os.path.join(folder, "field.csv")),
        beta_contour_export(result.field, os.path.join(folder, "beta.csv")),
        write_json(os.path.join(folder, "history.json"), {"energy": result.history}),
        write_json(os.path.join(folder, "report.json"), report),
    ]
    console.print(report_table("Field minimiser", {**report, "defects": len(defects)}))
    finish(ctx, folder, {**params.as_dict(), "h": mesh.h, "init": str(options.get("init") or "interpolated")}, outputs)
    if not result.converged:
        logger.error("Field solve did not converge")
        ctx.exit(EXIT_FAILED)


@click.command("export-glyphs")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", type=click.Path(file_okay=False))
@click.pass_context
@handles_errors
def export_glyphs(ctx: click.Context, checkpoint: str, output_dir) -> None:
    """Eigenframe glyphs and the biaxiality field of a field checkpoint."""
    field = read_field(checkpoint)
    options = {"output_dir": output_dir}
    folder = output_folder(ctx, options, "glyphs")
    outputs = [
        write_glyphs(glyph_export(field), os.path.join(folder, "glyphs.csv")),
        beta_contour_export(field, os.path.join(folder, "beta.csv")),
    ]
    finish(ctx, folder, {"checkpoint": os.path.abspath(checkpoint)}, outputs)
