"""CSV checkpoints and JSON manifests. Every numeric column is written with %.17g so reads round-trip."""

from __future__ import annotations

import csv
import json
import logging
import os
from datetime import datetime, timezone
from functools import partial
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from nematic import __version__
from nematic.errors import CheckpointError, NematicError, TensorError
from nematic.field import Field2D, Glyphs
from nematic.mesh import DiskMesh, build_mesh
from nematic.perturbation import PerturbationProfile
from nematic.radial import RadialProfile
from nematic.tensors import CARTESIAN_BASIS, MaterialParams, QTensor, biaxiality


logger = logging.getLogger(__name__)

timestamp = partial(datetime.now, timezone.utc)

PARAM_KEYS = ("a2", "b2", "c2", "L", "M", "k", "R")
PROFILE_COLUMNS = ("r", "w0", "w1", "w2", "w3", "w4")
PERTURBATION_COLUMNS = ("r", "a0", "a1", "b0", "b1", "b2")
FIELD_COLUMNS = ("x", "y", "Qxx", "Qxy", "Qxz", "Qyy", "Qyz", "Qzz")
UPPER = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def _number(value: float) -> str:
    return "%.17g" % value


def _header(kind: str, params: MaterialParams, **extra: Any) -> str:
    items = {"kind": kind, **params.as_dict(), **extra}
    return "# " + ",".join(f"{key}={value}" for key, value in items.items())


def _parse_header(line: str, kind: str) -> dict[str, str]:
    if not line.startswith("# "):
        raise CheckpointError("Checkpoint is missing its '# key=value' header")
    try:
        items = dict(item.split("=", 1) for item in line[2:].strip().split(","))
    except ValueError as exc:
        raise CheckpointError(f"Malformed checkpoint header: {line.strip()}") from exc
    if items.get("kind") != kind:
        raise CheckpointError(f"Expected a {kind} checkpoint, found kind={items.get('kind')}")
    return items


def _params(items: Mapping[str, str]) -> MaterialParams:
    try:
        values = {key: float(items[key]) for key in PARAM_KEYS}
        values["k"] = int(values["k"])
        return MaterialParams(**values)
    except KeyError as exc:
        raise CheckpointError(f"Checkpoint header lacks parameter {exc}") from exc
    except (ValueError, NematicError) as exc:
        raise CheckpointError(f"Invalid parameters in checkpoint header: {exc}") from exc


def _write_table(path: str, header: str, columns: Iterable[str], rows: np.ndarray) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(header + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows([_number(v) for v in row] for row in rows)
    logger.debug(f"Wrote {len(rows)} rows to {path}")
    return path


def _read_table(path: str, kind: str, columns: tuple[str, ...]) -> tuple[dict[str, str], np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            items = _parse_header(f.readline(), kind)
            reader = csv.reader(f)
            names = tuple(next(reader, ()))
            if names != columns:
                raise CheckpointError(f"Expected columns {','.join(columns)}, found {','.join(names)}")
            rows = [[float(v) for v in row] for row in reader if row]
            if any(len(row) != len(columns) for row in rows):
                raise CheckpointError(f"Rows in {path} do not all have {len(columns)} entries")
    except CheckpointError:
        raise
    except OSError as exc:
        raise CheckpointError(f"Cannot read checkpoint {path}: {exc}") from exc
    except ValueError as exc:
        raise CheckpointError(f"Non-numeric entry in {path}: {exc}") from exc
    data = np.array(rows, dtype=float).reshape(-1, len(columns))
    if not np.all(np.isfinite(data)):
        raise CheckpointError(f"Non-finite values in {path}")
    return items, data


def write_profile(profile: RadialProfile, path: str) -> str:
    header = _header("profile", profile.params, N=profile.N, converged=profile.converged)
    return _write_table(path, header, PROFILE_COLUMNS, np.column_stack([profile.r, profile.w.T]))


def read_profile(path: str) -> RadialProfile:
    items, data = _read_table(path, "profile", PROFILE_COLUMNS)
    params = _params(items)
    converged = {"True": True, "False": False}.get(items.get("converged", ""))
    try:
        return RadialProfile(data[:, 0], data[:, 1:].T, params, converged)
    except NematicError as exc:
        raise CheckpointError(f"Invalid profile in {path}: {exc}") from exc


def write_perturbation(W: PerturbationProfile, path: str) -> str:
    header = _header("perturbation", W.params, N=len(W.r) - 1)
    return _write_table(path, header, PERTURBATION_COLUMNS, np.column_stack([W.r, W.modes.T]))


def read_perturbation(path: str) -> PerturbationProfile:
    items, data = _read_table(path, "perturbation", PERTURBATION_COLUMNS)
    params = _params(items)
    r = data[:, 0]
    if len(r) < 2 or r[0] != 0.0 or abs(r[-1] - params.R) > 1e-12 * params.R or np.any(np.diff(r) <= 0):
        raise CheckpointError(f"Perturbation grid in {path} must increase from 0 to R={params.R}")
    try:
        return PerturbationProfile(r, data[:, 1:].T, params)
    except NematicError as exc:
        raise CheckpointError(f"Invalid perturbation in {path}: {exc}") from exc


def write_field(field: Field2D, path: str) -> str:
    mesh = field.mesh
    Q = field.tensors
    entries = np.stack([Q[:, i, j] for i, j in UPPER], axis=-1)
    header = _header("field", field.params, n_rings=mesh.n_rings, n_nodes=mesh.n_nodes)
    return _write_table(path, header, FIELD_COLUMNS, np.column_stack([mesh.nodes, entries]))


def read_field(path: str, mesh: Optional[DiskMesh] = None) -> Field2D:
    """Rebuild the ring mesh from the header and validate nodes, symmetry and trace."""
    items, data = _read_table(path, "field", FIELD_COLUMNS)
    params = _params(items)
    try:
        n_rings = int(items["n_rings"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError("Field checkpoint header lacks n_rings") from exc
    mesh = mesh or build_mesh(params.R, params.R / n_rings * (1 + 1e-12))
    if data.shape[0] != mesh.n_nodes or np.max(np.abs(data[:, :2] - mesh.nodes)) > 1e-10 * params.R:
        raise CheckpointError(f"Field nodes in {path} do not match the ring mesh with {n_rings} rings")

    Q = np.zeros((mesh.n_nodes, 3, 3))
    for column, (i, j) in enumerate(UPPER, start=2):
        Q[:, i, j] = Q[:, j, i] = data[:, column]
    scale = 1e-10 * max(params.s_plus, 1.0)
    try:
        Q = QTensor(Q)
    except TensorError as exc:
        raise CheckpointError(f"Field in {path} is rejected: {exc}") from exc
    field = Field2D(mesh, Q.components(CARTESIAN_BASIS), params)
    if field.boundary_error() > scale:
        raise CheckpointError(f"Field in {path} does not carry the Dirichlet data")
    return field


def write_glyphs(glyphs: Glyphs, path: str) -> str:
    columns = ["x", "y", "beta"]
    for i in range(3):
        columns += [f"lambda{i}", f"length{i}", f"n{i}x", f"n{i}y", f"n{i}z"]
    parts = [glyphs.nodes, glyphs.beta[:, None]]
    for i in range(3):
        parts += [glyphs.eigenvalues[:, i : i + 1], glyphs.lengths[:, i : i + 1], glyphs.eigenvectors[:, :, i]]
    return _write_table(path, "# kind=glyphs", columns, np.hstack(parts))


def beta_contour_export(field: Field2D, path: str) -> str:
    """Nodal biaxiality with coordinates and the triangle list, ready for a contouring tool."""
    beta = np.asarray(biaxiality(field.tensors))
    header = _header("beta", field.params, n_nodes=field.mesh.n_nodes)
    _write_table(path, header, ("x", "y", "beta"), np.column_stack([field.mesh.nodes, beta]))
    triangles = os.path.splitext(path)[0] + "_triangles.csv"
    with open(triangles, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("i", "j", "k"))
        writer.writerows(field.mesh.triangles.tolist())
    return path


def write_rows(path: str, columns: Iterable[str], rows: Iterable[Iterable[Any]]) -> str:
    """Plain CSV table; floats go through %.17g, everything else through str."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if v is None else _number(v) if isinstance(v, float) else v for v in row])
    return path


def write_json(path: str, payload: Mapping[str, Any]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_jsonable)
        f.write("\n")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Cannot serialise {type(value).__name__}")


def write_manifest(
    output_dir: str,
    command: str,
    parameters: Mapping[str, Any],
    outputs: Iterable[str],
    settings: Optional[Mapping[str, Any]] = None,
) -> str:
    settings = settings or {}
    manifest = {
        "command": command,
        "version": __version__,
        "timestamp": timestamp().isoformat(),
        "config": settings.get("CONFIG_NAME"),
        "settings": {key: value for key, value in settings.items() if key.isupper()},
        "parameters": dict(parameters),
        "outputs": sorted(os.path.relpath(p, output_dir) for p in outputs),
    }
    return write_json(os.path.join(output_dir, "manifest.json"), manifest)


def read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"Cannot read JSON file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise CheckpointError(f"{path} must hold a JSON object")
    return data


def checkpoint_kind(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as f:
            line = f.readline()
    except OSError as exc:
        raise CheckpointError(f"Cannot read checkpoint {path}: {exc}") from exc
    for item in line[2:].strip().split(",") if line.startswith("# ") else []:
        key, _, value = item.partition("=")
        if key == "kind":
            return value
    raise CheckpointError(f"{path} has no checkpoint header")
