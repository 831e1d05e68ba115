import logging
import os

import click

from nematic.checkpoints import write_json, write_profile
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
from nematic.radial import (
    PRESETS,
    classify_profile,
    field_energy,
    gamma_limit_residual,
    minimize_radial,
    minimize_radial_two_component,
    ode_residual,
    reduced_hessian_min_eig,
    solve_radial_critical,
)


logger = logging.getLogger(__name__)


@click.command("solve-radial")
@param_options
@click.option("--branch", type=click.Choice(PRESETS), help="Seed preset of the radial branch.")
@click.option("--N", "N", type=int, help="Number of radial cells.")
@click.option("--two-component", is_flag=True, default=None, help="Restrict to w2 = w3 = w4 = 0.")
@click.option("--critical", is_flag=True, default=None, help="Solve for the nearest critical point, saddles included.")
@click.pass_context
@handles_errors
def solve_radial(ctx: click.Context, config_file, **flags) -> None:
    """Minimise the reduced radial energy for one branch, or find its critical point with --critical,
    and report its classification and stability."""
    options = merge_options(config_file, flags)
    params = material_params(options)
    settings = ctx.obj
    N = int(options.get("N") or settings["RADIAL_GRID_POINTS"])
    branch = options.get("branch") or "q2minus"
    tol = settings["RADIAL_GRADIENT_TOL"] * N
    active = (0, 1) if options.get("two_component") else None
    if options.get("critical"):
        result = solve_radial_critical(
            params, init=branch, N=N, tol=tol, max_iter=settings["RADIAL_MAX_ITER"], active=active
        )
    else:
        solver = minimize_radial_two_component if active else minimize_radial
        result = solver(params, init=branch, N=N, tol=tol, max_iter=settings["RADIAL_MAX_ITER"])
    profile = result.profile

    report = {
        "branch": branch,
        "converged": result.converged,
        "iterations": result.iterations,
        "gradient_norm": result.gradient_norm,
        "energy": result.energy,
        "field_energy": field_energy(result.energy, params),
        "ode_residual": ode_residual(profile).norm,
        "gamma_constraint": gamma_limit_residual(profile).relative,
    }
    if result.converged:
        report["label"] = classify_profile(profile)
        min_eig = reduced_hessian_min_eig(profile).value
        report["min_eig"] = min_eig
        report["stable"] = min_eig > 0

    folder = output_folder(ctx, options, "radial")
    outputs = [
        write_profile(profile, os.path.join(folder, "profile.csv")),
        write_json(os.path.join(folder, "report.json"), report),
    ]
    console.print(report_table(f"Radial branch {branch}", report))
    finish(ctx, folder, {**params.as_dict(), "branch": branch, "N": N}, outputs)
    if not result.converged:
        logger.error(f"Radial solve for {branch} did not converge")
        ctx.exit(EXIT_FAILED)
