import warnings

import numpy as np
import pytest

from verixanon.traps import DuplicateTrackerID, NoBoundaryCandidates, TrapManifest, \
    assemble_outsourced, compute_tracker_id, fit_boundary_forest, generate_sentinels, \
    generate_twins, read_outsourced_csv, sentinel_cap, twin_count, write_outsourced_csv


def test_tracker_id_oracles():
    # digests of the literal texts "s|genuine|0|1.000000" and
    # "s|twin|3|1.500000,-2.000000,0.000000"
    assert compute_tracker_id(b"s", "genuine", 0, [1.0]) == \
        "73dd515c3f7230daf4eccf5464ebc2694811ab06a4469eca7d351cf4fd75c07f"
    assert compute_tracker_id(b"s", "twin", 3, [1.5, -2.0, -1e-9]) == \
        "e7658de27c19515d3160567f9124b48a26da48de62346a18c44bff6fb90696cd"
    with pytest.raises(ValueError):
        compute_tracker_id(b"s", "ghost", 0, [1.0])


def test_counts():
    assert sentinel_cap(8000) == 160 and sentinel_cap(8413) == 169
    assert twin_count(8000, 0.05) == 400 and twin_count(8413, 0.05) == 420


def test_sentinels(strong_small):
    forest = fit_boundary_forest(strong_small, 1)
    batch = generate_sentinels(strong_small, forest, 5, 1)
    assert len(batch.rows) <= 5 and batch.n_candidates >= len(batch.rows)
    X = strong_small.X
    qi = batch.rows[:, strong_small.qi_indices]
    assert ((qi >= X.min(axis=0)) & (qi <= X.max(axis=0))).all()
    # categoricals and the target are copied from the source row
    src = strong_small.rows[batch.source_index]
    for j, c in enumerate(strong_small.schema):
        if c.kind == "categorical" or c.role == "target":
            assert np.array_equal(batch.rows[:, j], src[:, j])
        if c.kind == "integer":
            assert np.array_equal(batch.rows[:, j], np.round(batch.rows[:, j]))
    again = generate_sentinels(strong_small, forest, 5, 1)
    assert np.array_equal(batch.rows, again.rows)


def test_empty_band_warns(strong_small):
    forest = fit_boundary_forest(strong_small, 1)
    with pytest.warns(NoBoundaryCandidates):
        batch = generate_sentinels(strong_small, forest, 5, 1, band=(2.0, 3.0))
    assert len(batch.rows) == 0


def test_twins(strong_small):
    twins = generate_twins(strong_small, 0.05, 2)
    assert len(twins) == 30
    for i, row in twins:
        assert np.array_equal(row, strong_small.rows[i])


def test_assembly_and_manifest(tmp_path, strong_small):
    forest = fit_boundary_forest(strong_small, 1)
    sentinels = generate_sentinels(strong_small, forest, 10, 1)
    twins = generate_twins(strong_small, 0.05, 1)
    out, manifest = assemble_outsourced(strong_small, sentinels, twins, b"salt", 3)
    assert out.n_rows == strong_small.n_rows + len(sentinels.rows) + len(twins)
    assert len(set(out.tracker_ids)) == out.n_rows
    assert manifest.sentinel_ids == {t for t, r in zip(out.tracker_ids, out.roles) if r == "sentinel"}
    assert len(manifest.twin_pairs) == len(twins)
    row_of = dict(zip(out.tracker_ids, out.table.rows.tolist()))
    for orig, twin in manifest.twin_pairs.items():
        assert row_of[orig] == row_of[twin]
    # ids do not depend on the shuffle
    out2, _ = assemble_outsourced(strong_small, sentinels, twins, b"salt", 4)
    assert set(out2.tracker_ids) == set(out.tracker_ids)

    path = tmp_path / "m.json"
    manifest.save(path)
    back = TrapManifest.load(path)
    assert back.to_dict() == manifest.to_dict()

    write_outsourced_csv(tmp_path / "o.csv", out.published())
    pub = read_outsourced_csv(tmp_path / "o.csv", strong_small.schema)
    assert pub.tracker_ids == out.tracker_ids
    assert np.array_equal(pub.table.rows, out.table.rows)


def test_duplicate_ids(strong_small):
    dup = strong_small.take([0, 0] + list(range(1, 20)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        # identical rows still differ by index, so ids stay unique
        out, _ = assemble_outsourced(dup, None, [], b"s", 0)
    assert len(set(out.tracker_ids)) == out.n_rows


def test_manifest_invariants():
    with pytest.raises(ValueError):
        TrapManifest(b"s", frozenset({"a"}), {"a": "b"})
    with pytest.raises(ValueError):
        TrapManifest(b"s", frozenset(), {"a": "c", "b": "c"})
    assert DuplicateTrackerID.__mro__[1] is ValueError
