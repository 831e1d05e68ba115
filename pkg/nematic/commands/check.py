import logging

import click
import numpy as np

from nematic.checkpoints import checkpoint_kind, read_field, read_perturbation, read_profile
from nematic.commands.common import EXIT_FAILED, console, handles_errors, report_table
from nematic.elastic import null_lagrangian_check, null_lagrangian_constant
from nematic.field import classify_field
from nematic.radial import classify_profile, ode_residual, radial_energy


logger = logging.getLogger(__name__)


def _profile_checks(path: str) -> dict:
    profile = read_profile(path)
    shifted = radial_energy(profile, form="shifted")
    divergence = radial_energy(profile, form="divergence")
    checks = {
        "boundary and origin data": True,
        "energy forms agree": bool(abs(shifted - divergence) <= 1e-9 * max(abs(divergence), 1.0)),
        "ode_residual": ode_residual(profile).norm,
    }
    if profile.converged:
        checks["label"] = classify_profile(profile)
    return checks


def _field_checks(path: str) -> dict:
    field = read_field(path)
    nl = null_lagrangian_check(field)
    verdict = classify_field(field)
    return {
        "symmetric, traceless, Dirichlet data": True,
        "null Lagrangian (volume)": nl.volume,
        "null Lagrangian (boundary)": nl.boundary,
        "null Lagrangian (exact)": null_lagrangian_constant(field.params),
        "label": verdict.radial_label or verdict.label,
    }


def _perturbation_checks(path: str) -> dict:
    W = read_perturbation(path)
    scale = 1e-10 * max(float(np.max(np.abs(W.modes))), 1.0)
    return {
        "vanishes at r=R": bool(np.max(np.abs(W.modes[:, -1])) <= scale),
        "regular at the origin": bool(np.max(np.abs(W.modes[1:, 0])) <= scale),
    }


CHECKS = {"profile": _profile_checks, "field": _field_checks, "perturbation": _perturbation_checks}


@click.command("check")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
@handles_errors
def check(ctx: click.Context, checkpoint: str) -> None:
    """Re-load a checkpoint and run its invariant checks; any violation exits with 1."""
    kind = checkpoint_kind(checkpoint)
    if kind not in CHECKS:
        logger.error(f"No checks for checkpoint kind {kind}")
        ctx.exit(EXIT_FAILED)
    results = CHECKS[kind](checkpoint)
    console.print(report_table(f"{kind} checkpoint", results))
    failed = [name for name, value in results.items() if value is False]
    if failed:
        logger.error(f"Checkpoint {checkpoint} fails: {', '.join(failed)}")
        ctx.exit(EXIT_FAILED)
