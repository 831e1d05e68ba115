import logging
import os

import click
from rich.table import Table

from nematic.checkpoints import write_json, write_perturbation, write_profile, write_rows
from nematic.commands.common import (
    EXIT_FAILED,
    console,
    finish,
    handles_errors,
    material_params,
    merge_options,
    output_folder,
    param_options,
)
from nematic.perturbation import epsilon_scaling_check, mode_field_energy, solve_perturbation
from nematic.radial import minimize_radial_M0


logger = logging.getLogger(__name__)


@click.command("perturb")
@param_options
@click.option("--eps", "eps", type=float, multiple=True, help="Values of M = eps for the scaling check.")
@click.option("--N", "N", type=int, help="Number of radial cells.")
@click.option("--h-fraction", type=float, help="Target mesh size of the scaling check as a fraction of R.")
@click.option("--tol", type=float, help="Gradient tolerance of the 2D minimisations.")
@click.pass_context
@handles_errors
def perturb(ctx: click.Context, config_file, **flags) -> None:
    """First-order correction W of the M=0 solution and the eps^2 scaling of the remainder."""
    if not flags.get("eps"):
        flags["eps"] = None
    options = merge_options(config_file, flags)
    params = material_params(options, M=0.0)
    settings = ctx.obj
    N = int(options.get("N") or settings["RADIAL_GRID_POINTS"])

    Y = minimize_radial_M0(params, N=N, tol=settings["RADIAL_GRADIENT_TOL"] * N)
    if not Y.converged:
        logger.error("The M=0 radial solve did not converge")
        ctx.exit(EXIT_FAILED)
    solved = solve_perturbation(Y.profile, params.k, pd_threshold=settings["PD_THRESHOLD"])

    folder = output_folder(ctx, options, "perturbation")
    outputs = [
        write_profile(Y.profile.as_radial(), os.path.join(folder, "y_profile.csv")),
        write_perturbation(solved.profile, os.path.join(folder, "perturbation.csv")),
    ]
    n_phi = settings["MODE_QUADRATURE"]
    t = 1e-3
    curvature = (
        mode_field_energy(Y.profile, solved.profile, t, n_phi=n_phi)
        - 2 * mode_field_energy(Y.profile, solved.profile, 0.0, n_phi=n_phi)
        + mode_field_energy(Y.profile, solved.profile, -t, n_phi=n_phi)
    ) / t**2
    report = {
        "k": params.k,
        "residual": solved.residual,
        "min_eigenvalue": solved.min_eigenvalue,
        "energy_curvature": curvature,
    }

    eps = sorted(float(e) for e in options.get("eps") or [])
    if eps:
        table = epsilon_scaling_check(
            params, params.k, eps,
            h_fraction=options.get("h_fraction") or settings["FIELD_TARGET_H_FRACTION"],
            N=N,
            tol=options.get("tol") or 1e-9,
            max_iter=settings["FIELD_MAX_ITER"],
        )
        report.update(slope=table.slope, y_norm=table.y_norm, w_discrepancy=table.w_discrepancy)
        outputs.append(write_rows(
            os.path.join(folder, "scaling.csv"), ("eps", "delta", "relative", "converged", "delta_mesh"), table.rows
        ))
        view = Table(title=f"Perturbation scaling, k={params.k}")
        for column in ("eps", "delta", "delta/|Y|", "converged"):
            view.add_column(column, justify="right")
        for row in table.rows:
            view.add_row(f"{row.eps:g}", f"{row.delta:.4e}", f"{row.relative:.4e}", str(row.converged))
        console.print(view)
        console.print(f"log-log slope: [bold]{table.slope:.3f}[/bold]")

    outputs.append(write_json(os.path.join(folder, "report.json"), report))
    finish(ctx, folder, {**params.as_dict(), "N": N, "eps": eps}, outputs)
