import os
import random

import pytest

from nematic.errors import ParameterError
from nematic.radial import field_energy, minimize_radial
from nematic.sweep import (
    DIAGRAM_COLUMNS,
    BranchRecord,
    PhaseDiagram,
    SweepConfig,
    continuation_sweep,
    detect_transitions,
    diagram_rows,
    energies,
    global_minimizer,
)


def record(label, energy, M=0.0, R=5.0, branch="q2minus", converged=True, min_eig=1.0, direction="up"):
    return BranchRecord(branch, M, R, direction, label, energy, converged, min_eig=min_eig)


@pytest.mark.parametrize(
    "changes",
    [
        {"M_grid": [0.5, 0.0]},
        {"M_grid": []},
        {"R_grid": [0.0]},
        {"M_grid": [-0.8]},
        {"branches": ["q7"]},
        {"branches": []},
        {"k": 1, "M_grid": [0.0, 0.5]},
        {"c2": 0.0},
    ],
)
def test_invalid_sweep_config(changes):
    with pytest.raises(ParameterError):
        SweepConfig(**changes)


def test_non_radial_windings_allowed_at_M0():
    assert SweepConfig(k=1, M_grid=[0.0]).k == 1
    assert SweepConfig(k=1, M_grid=[0.0, 0.5], branches=["interpolated"]).branches == ["interpolated"]


def test_config_from_mapping(settings):
    cfg = SweepConfig.from_mapping({"M_grid": [0, 1], "R_grid": [5]}, settings)
    assert cfg.radial_N == settings["RADIAL_GRID_POINTS"]
    assert cfg.M_grid == [0.0, 1.0]
    with pytest.raises(ParameterError, match="bogus"):
        SweepConfig.from_mapping({"bogus": 1}, settings)


def test_global_minimizer_prefers_lowest_converged_energy():
    records = [
        record("Q2-", 1.0),
        record("Q3", 0.5, converged=False),
        record("Q2+-", 0.9, branch="q2pm"),
        record(None, 0.1, branch="q5"),
    ]
    best = global_minimizer(records)
    assert (best.label, best.energy, best.branch) == ("Q2+-", 0.9, "q2pm")


def test_global_minimizer_is_order_independent():
    records = [record("Q2-", 1.0), record("Q3", 1.0, branch="q3"), record("Q5", 2.0, branch="q5")]
    expected = global_minimizer(records)
    shuffled = records[:]
    random.Random(3).shuffle(shuffled)
    assert global_minimizer(shuffled) == expected
    assert expected.label == "Q2-"
    assert expected.ties == ("Q3",)


def test_near_degenerate_energies_are_ties():
    best = global_minimizer([record("Q2-", 100.0), record("Q3", 100.00005, branch="q3")], tie=1e-6)
    assert best.ties == ("Q3",)
    best = global_minimizer([record("Q2-", 100.0), record("Q3", 100.001, branch="q3")], tie=1e-6)
    assert best.ties == ()


def test_no_converged_branch_is_unresolved():
    best = global_minimizer([record("Q2-", 1.0, converged=False)])
    assert best.label is None


def _diagram(records, M_grid, branches):
    cfg = SweepConfig(M_grid=M_grid, R_grid=[5.0], branches=branches, radial_N=100)
    pd = PhaseDiagram(cfg, records)
    for M in M_grid:
        pd.minimizers[(M, 5.0)] = global_minimizer(pd.at(M, 5.0))
    return pd


def test_coexisting_labels_make_a_first_order_transition():
    records = [
        record("Q2-", 1.0, M=0.0),
        record("Q3", 2.0, M=0.0, branch="q3"),
        record("Q2-", 2.0, M=1.0),
        record("Q3", 1.0, M=1.0, branch="q3"),
    ]
    pd = _diagram(records, [0.0, 1.0], ["q2minus", "q3"])
    (transition,) = detect_transitions(pd)
    assert (transition.M_low, transition.M_high) == (0.0, 1.0)
    assert (transition.before, transition.after, transition.kind) == ("Q2-", "Q3", "first_order")


def test_lost_branch_makes_a_bifurcation():
    records = [
        record("Q2-", 1.0, M=0.0),
        record("Q3", 0.5, M=1.0, branch="q3"),
        record(None, float("nan"), M=1.0, converged=False),
    ]
    pd = _diagram(records, [0.0, 1.0], ["q2minus", "q3"])
    kinds = {(t.kind, t.branch) for t in detect_transitions(pd)}
    assert ("bifurcation", None) in kinds


def test_stability_loss_along_a_branch():
    records = [
        record("Q2-", 1.0, M=0.0, min_eig=0.2),
        record("Q2-", 1.0, M=1.0, min_eig=0.1),
        record("Q2-", 1.0, M=2.0, min_eig=-0.1),
    ]
    pd = _diagram(records, [0.0, 1.0, 2.0], ["q2minus"])
    (transition,) = detect_transitions(pd)
    assert (transition.M_low, transition.M_high, transition.branch) == (1.0, 2.0, "q2minus")
    assert transition.kind == "bifurcation"


def test_single_point_sweep_matches_direct_solve():
    cfg = SweepConfig(M_grid=[0.0], R_grid=[3.0], radial_N=200)
    pd = continuation_sweep(cfg)
    (rec,) = pd.records
    direct = minimize_radial(cfg.params(0.0, 3.0), N=200)
    assert rec.converged and rec.label == "Q2-"
    assert rec.energy == pytest.approx(field_energy(direct.energy, direct.profile.params))
    assert pd.label(0.0, 3.0) == "Q2-"
    assert pd.unresolved == []


def test_two_point_walk_visits_both_directions(tmp_path):
    cfg = SweepConfig(b2=1.0, M_grid=[0.0, 0.5], R_grid=[3.0], radial_N=150, output_dir=str(tmp_path))
    pd = continuation_sweep(cfg)
    assert sorted((r.M, r.direction) for r in pd.records) == [(0.0, "down"), (0.0, "up"), (0.5, "down"), (0.5, "up")]
    assert all(r.converged for r in pd.records)
    assert all(os.path.exists(r.checkpoint) for r in pd.records)
    rows = diagram_rows(pd)
    assert len(rows) == 4 and len(rows[0]) == len(DIAGRAM_COLUMNS)
    assert pd.label(0.5, 3.0) in energies(pd, 0.5, 3.0)


def test_field_branch_shares_the_sweep():
    cfg = SweepConfig(
        M_grid=[0.0], R_grid=[2.0], branches=["q2minus", "interpolated"], radial_N=150,
        target_h_fraction=0.1, field_max_iter=3000,
    )
    pd = continuation_sweep(cfg)
    radial, mesh_record = sorted(pd.records, key=lambda r: r.branch != "q2minus")
    assert radial.error_estimate is not None
    assert mesh_record.converged
    assert mesh_record.symmetry_residual is not None
    assert mesh_record.energy == pytest.approx(radial.energy, rel=5e-2)


def test_parallel_sweep_matches_serial():
    serial = continuation_sweep(SweepConfig(M_grid=[0.0], R_grid=[2.0, 3.0], radial_N=100))
    parallel = continuation_sweep(SweepConfig(M_grid=[0.0], R_grid=[2.0, 3.0], radial_N=100, workers=2))
    assert [r.R for r in parallel.records] == [r.R for r in serial.records]
    assert [r.energy for r in parallel.records] == pytest.approx([r.energy for r in serial.records])
