"""Continuation sweeps over (M, R), branch bookkeeping and transition bracketing."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from math import isfinite
from typing import Any, Mapping, NamedTuple, Optional, Union

import numpy as np

from nematic.checkpoints import write_field, write_profile
from nematic.elastic import coercivity_dirichlet
from nematic.errors import NematicError, ParameterError
from nematic.field import Field2D, FIELD_PRESETS, assemble_radial_field, classify_field, detect_defects, minimize_field, total_energy
from nematic.mesh import build_mesh
from nematic.radial import (
    PRESETS,
    RadialProfile,
    classify_profile,
    field_energy,
    minimize_radial,
    minimize_radial_two_component,
    reduced_hessian_min_eig,
)
from nematic.tensors import MaterialParams


logger = logging.getLogger(__name__)

FIELD_BRANCHES = FIELD_PRESETS


@dataclass
class SweepConfig:
    a2: float = 1.0
    b2: float = 0.0
    c2: float = 1.0
    L: float = 1.0
    k: int = 2
    M_grid: list = field(default_factory=lambda: [0.0])
    R_grid: list = field(default_factory=lambda: [50.0])
    branches: list = field(default_factory=lambda: ["q2minus"])
    target_h_fraction: float = 1 / 60
    radial_N: int = 2000
    radial_tol: Optional[float] = None
    radial_max_iter: int = 200
    field_tol: float = 1e-6
    field_max_iter: int = 20000
    optimizer: str = "lbfgs"
    max_mesh_nodes: int = 2_000_000
    output_dir: Optional[str] = None
    workers: int = 1
    m_lower_bound: float = -0.75
    degenerate_tie: float = 1e-6
    beta_tol: float = 0.05
    symmetry_tol_factor: float = 1e-3

    def __post_init__(self) -> None:
        self.M_grid = [float(m) for m in self.M_grid]
        self.R_grid = [float(r) for r in self.R_grid]
        self.branches = list(self.branches)
        self.validate()

    def validate(self) -> None:
        if not self.M_grid or not self.R_grid:
            raise ParameterError("Sweep grids must be non-empty")
        for name, grid in (("M_grid", self.M_grid), ("R_grid", self.R_grid)):
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ParameterError(f"{name} must be strictly increasing: {grid}")
        if min(self.R_grid) <= 0:
            raise ParameterError(f"Disk radii must be positive: {self.R_grid}")
        for M in self.M_grid:
            if M <= self.m_lower_bound * self.L or not coercivity_dirichlet(self.L, M):
                raise ParameterError(f"M={M} violates coercivity for L={self.L} (lower bound {self.m_lower_bound})")
        unknown = [b for b in self.branches if b not in PRESETS and b not in FIELD_BRANCHES]
        if unknown or not self.branches:
            raise ParameterError(f"Unknown or missing branch presets: {unknown or self.branches}")
        if self.k != 2 and any(M != 0 for M in self.M_grid) and any(b in PRESETS for b in self.branches):
            raise ParameterError(f"Radial branches need k=2 when M != 0, got k={self.k}")
        MaterialParams(self.a2, self.b2, self.c2, self.L, self.M_grid[0], self.k, self.R_grid[0])

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], settings: Optional[Mapping[str, Any]] = None) -> "SweepConfig":
        """Config-file keys mirror the field names; settings supply the numerical defaults."""
        settings = settings or {}
        defaults = {
            "target_h_fraction": settings.get("FIELD_TARGET_H_FRACTION"),
            "radial_N": settings.get("RADIAL_GRID_POINTS"),
            "radial_max_iter": settings.get("RADIAL_MAX_ITER"),
            "field_tol": settings.get("FIELD_GRADIENT_TOL"),
            "field_max_iter": settings.get("FIELD_MAX_ITER"),
            "optimizer": settings.get("FIELD_OPTIMIZER"),
            "max_mesh_nodes": settings.get("MAX_MESH_NODES"),
            "output_dir": settings.get("OUTPUT_DIR"),
            "workers": settings.get("SWEEP_WORKERS"),
            "m_lower_bound": settings.get("M_LOWER_BOUND"),
            "degenerate_tie": settings.get("DEGENERATE_TIE"),
            "beta_tol": settings.get("BETA_TOL"),
            "symmetry_tol_factor": settings.get("SYMMETRY_TOL_FACTOR"),
        }
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - names)
        if unknown:
            raise ParameterError(f"Unknown sweep config keys: {', '.join(unknown)}")
        values = {key: value for key, value in defaults.items() if value is not None}
        values.update(mapping)
        return cls(**values)

    def params(self, M: float, R: float) -> MaterialParams:
        return MaterialParams(self.a2, self.b2, self.c2, self.L, M, self.k, R)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class BranchRecord:
    branch: str
    M: float
    R: float
    direction: str
    label: Optional[str]
    energy: float
    converged: bool
    min_eig: Optional[float] = None
    defects: list = field(default_factory=list)
    symmetry_residual: Optional[float] = None
    vertical_residual: Optional[float] = None
    error_estimate: Optional[float] = None
    checkpoint: Optional[str] = None

    @property
    def is_radial(self) -> bool:
        return self.branch in PRESETS

    @property
    def stable(self) -> Optional[bool]:
        return None if self.min_eig is None or not isfinite(self.min_eig) else self.min_eig > 0


class GlobalMinimizer(NamedTuple):
    label: Optional[str]
    energy: float
    branch: Optional[str]
    ties: tuple


class Transition(NamedTuple):
    R: float
    M_low: float
    M_high: float
    before: str
    after: str
    kind: str
    branch: Optional[str] = None


@dataclass
class PhaseDiagram:
    config: SweepConfig
    records: list = field(default_factory=list)
    minimizers: dict = field(default_factory=dict)

    @property
    def unresolved(self) -> list[tuple[float, float]]:
        return sorted(point for point, best in self.minimizers.items() if best.label is None)

    def at(self, M: float, R: float) -> list[BranchRecord]:
        return [r for r in self.records if r.M == M and r.R == R]

    def label(self, M: float, R: float) -> Optional[str]:
        return self.minimizers[(M, R)].label


def global_minimizer(records: list[BranchRecord], tie: float = 1e-6) -> GlobalMinimizer:
    """Least-energy converged record; labels within tie*|E| of it are reported as ties."""
    candidates = [r for r in records if r.converged and r.label is not None and isfinite(r.energy)]
    if not candidates:
        return GlobalMinimizer(None, float("nan"), None, ())
    best = min(candidates, key=lambda r: (r.energy, r.label, r.branch))
    window = tie * max(abs(best.energy), 1.0)
    ties = sorted({r.label for r in candidates if r.energy - best.energy <= window and r.label != best.label})
    return GlobalMinimizer(best.label, best.energy, best.branch, tuple(ties))


def _checkpoint_path(cfg: SweepConfig, branch: str, M: float, R: float, direction: str) -> Optional[str]:
    if not cfg.output_dir:
        return None
    return os.path.join(cfg.output_dir, "checkpoints", f"{branch}_R{R:g}_M{M:g}_{direction}.csv")


def _radial_record(cfg, branch, params, direction, previous, mesh):
    # Q2 branches are minimisers of the (w0, w1) restriction and may be saddles of the full energy
    solver = minimize_radial_two_component if branch in ("q2minus", "q2pm") else minimize_radial
    result = solver(params, init=previous or branch, N=cfg.radial_N, tol=cfg.radial_tol, max_iter=cfg.radial_max_iter)
    profile = result.profile
    label, min_eig, error = None, None, None
    if result.converged:
        label = classify_profile(profile)
        min_eig = result.min_eig if result.min_eig is not None else reduced_hessian_min_eig(profile).value
    energy = field_energy(result.energy, params)
    if mesh is not None:
        error = abs(total_energy(assemble_radial_field(profile, mesh)) - energy)
    path = _checkpoint_path(cfg, branch, params.M, params.R, direction)
    if path:
        write_profile(profile, path)
    record = BranchRecord(branch, params.M, params.R, direction, label, energy, result.converged,
                          min_eig=min_eig, error_estimate=error, checkpoint=path)
    return record, profile


def _field_record(cfg, branch, params, direction, previous, mesh):
    init = previous if previous is not None else branch
    result = minimize_field(params, mesh, init=init, tol=cfg.field_tol, max_iter=cfg.field_max_iter, optimizer=cfg.optimizer)
    s = params.s_plus
    verdict = classify_field(result.field, tol=cfg.symmetry_tol_factor * s)
    defects = [tuple(float(c) for c in d.position) for d in detect_defects(result.field, cfg.beta_tol)]
    path = _checkpoint_path(cfg, branch, params.M, params.R, direction)
    if path:
        write_field(result.field, path)
    record = BranchRecord(
        branch, params.M, params.R, direction,
        (verdict.radial_label or verdict.label) if result.converged else None,
        result.energy, result.converged,
        defects=defects, symmetry_residual=verdict.symmetry_residual,
        vertical_residual=verdict.vertical_residual, checkpoint=path,
    )
    return record, result.field


def sweep_radius(cfg: SweepConfig, R: float) -> list[BranchRecord]:
    """Ascending then descending walk in M for every branch at one radius, warm-started along the walk."""
    needs_mesh = any(b in FIELD_BRANCHES for b in cfg.branches)
    mesh = build_mesh(R, cfg.target_h_fraction * R, cfg.max_mesh_nodes) if needs_mesh else None
    records: list[BranchRecord] = []
    for branch in cfg.branches:
        solve = _radial_record if branch in PRESETS else _field_record
        previous: Union[None, RadialProfile, Field2D] = None
        passes = [("up", cfg.M_grid)]
        if len(cfg.M_grid) > 1:
            passes.append(("down", cfg.M_grid[::-1]))
        for direction, grid in passes:
            for M in grid:
                params = cfg.params(M, R)
                try:
                    record, state = solve(cfg, branch, params, direction, previous, mesh)
                except NematicError as exc:
                    logger.warning(f"Branch {branch} failed at M={M} R={R}: {exc}")
                    records.append(BranchRecord(branch, M, R, direction, None, float("nan"), False))
                    continue
                records.append(record)
                previous = state if record.converged else previous
                logger.info(f"{branch} M={M:g} R={R:g} ({direction}): {record.label} E={record.energy:.10g}")
    return records


def continuation_sweep(cfg: SweepConfig) -> PhaseDiagram:
    cfg.validate()
    if cfg.workers > 1 and len(cfg.R_grid) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            batches = list(pool.map(sweep_radius, [cfg] * len(cfg.R_grid), cfg.R_grid))
    else:
        batches = [sweep_radius(cfg, R) for R in cfg.R_grid]

    diagram = PhaseDiagram(cfg, [record for batch in batches for record in batch])
    for R in cfg.R_grid:
        for M in cfg.M_grid:
            diagram.minimizers[(M, R)] = global_minimizer(diagram.at(M, R), cfg.degenerate_tie)
    unresolved = diagram.unresolved
    if unresolved:
        logger.warning(f"{len(unresolved)} sweep points have no converged branch: {unresolved}")
    return diagram


def _persists(records: list[BranchRecord], label: str) -> bool:
    return any(r.converged and r.label == label and r.stable is not False for r in records)


def detect_transitions(pd: PhaseDiagram) -> list[Transition]:
    """Bracket label changes of the global minimiser and sign changes of radial branch stability."""
    found: list[Transition] = []
    grid = pd.config.M_grid
    for R in pd.config.R_grid:
        for low, high in zip(grid, grid[1:]):
            before, after = pd.minimizers[(low, R)].label, pd.minimizers[(high, R)].label
            if before is None or after is None or before == after:
                continue
            coexist = _persists(pd.at(high, R), before) and _persists(pd.at(low, R), after)
            found.append(Transition(R, low, high, before, after, "first_order" if coexist else "bifurcation"))

        for branch in pd.config.branches:
            if branch not in PRESETS:
                continue
            walk = {r.M: r for r in pd.records if r.branch == branch and r.R == R and r.direction == "up"}
            for low, high in zip(grid, grid[1:]):
                a, b = walk.get(low), walk.get(high)
                if a is None or b is None or a.stable is None or b.stable is None or a.stable == b.stable:
                    continue
                label = a.label or b.label
                found.append(Transition(R, low, high, label, label, "bifurcation", branch))
    found.sort(key=lambda t: (t.R, t.M_low, t.kind, t.branch or ""))
    logger.info(f"Detected {len(found)} transitions")
    return found


def diagram_rows(pd: PhaseDiagram) -> list[tuple]:
    """Rows of phase_diagram.csv: M, R, branch, direction, label, energy, converged, min_eig, global, checkpoint."""
    rows = []
    for r in sorted(pd.records, key=lambda r: (r.R, r.M, r.branch, r.direction)):
        best = pd.minimizers.get((r.M, r.R))
        rows.append((
            r.M, r.R, r.branch, r.direction, r.label or "", r.energy, r.converged,
            r.min_eig, best.label if best else "", r.checkpoint or "",
        ))
    return rows


DIAGRAM_COLUMNS = ("M", "R", "branch", "direction", "label", "energy", "converged", "min_eig", "global_label", "checkpoint")


def transition_rows(transitions: list[Transition]) -> list[tuple]:
    return [tuple(t) for t in transitions]


def energies(pd: PhaseDiagram, M: float, R: float) -> dict[str, float]:
    """Lowest converged energy per label at one grid point."""
    out: dict[str, float] = {}
    for r in pd.at(M, R):
        if r.converged and r.label is not None:
            out[r.label] = min(out.get(r.label, np.inf), r.energy)
    return out
