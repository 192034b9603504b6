import numpy as np
import pytest

from verixanon.dataset import ColumnSpec, InsufficientRows, ParseError, SchemaMismatch, Table, \
    bundled_schema_path, encode_categoricals, load_csv, load_rename_map, load_schema, \
    stratified_indices, stratified_subsample, train_test_split, write_csv

SCHEMA = (ColumnSpec("age", "integer"), ColumnSpec("job", "categorical"),
          ColumnSpec("score"), ColumnSpec("y", "integer", "target"))


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_and_impute(tmp_path):
    p = _write(tmp_path / "d.csv", "age,job,score,y\n30,b,1.5,0\n?,a,,1\n41,b,2.5,1\n")
    t = load_csv(p, SCHEMA)
    assert t.rows[1, 0] == 36            # median 35.5 rounded half away from zero
    assert t.rows[1, 2] == 2.0
    enc = encode_categoricals(t)
    assert enc.schema[1].categories == ("a", "b")
    assert enc.rows[:, 1].tolist() == [1, 0, 1]


def test_categorical_mode_tie_takes_smallest_label(tmp_path):
    p = _write(tmp_path / "d.csv", "age,job,score,y\n1,b,1,0\n2,a,1,1\n3,,1,0\n")
    assert load_csv(p, SCHEMA).rows[2, 1] == "a"


def test_header_and_row_errors(tmp_path):
    with pytest.raises(SchemaMismatch):
        load_csv(_write(tmp_path / "a.csv", "age,job,y\n1,a,0\n"), SCHEMA)
    with pytest.raises(SchemaMismatch):
        load_csv(_write(tmp_path / "b.csv", "age,job,score,y\n1,a,0\n"), SCHEMA)
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path / "c.csv", "age,job,score,y\n1,a,x,0\n"), SCHEMA)
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path / "d.csv", "age,job,score,y\n1,a,1,2\n"), SCHEMA)


def test_schema_validation():
    with pytest.raises(SchemaMismatch):
        Table((ColumnSpec("a"),), np.zeros((1, 1)))
    with pytest.raises(SchemaMismatch):
        ColumnSpec("a", kind="text")


def test_csv_round_trip(tmp_path, strong_small):
    write_csv(tmp_path / "t.csv", strong_small)
    back = load_csv(tmp_path / "t.csv", strong_small.schema, encoded=True)
    assert np.array_equal(back.rows, strong_small.rows)


def test_bundled_bank_schema():
    path = bundled_schema_path()
    schema = load_schema(path)
    rename = load_rename_map(path)
    assert [c.name for c in schema][:3] == ["age", "job", "marital"]
    assert rename["V12"] == "duration" and rename["V16"] == "poutcome"
    assert sum(c.role == "target" for c in schema) == 1


def test_stratified_subsample_keeps_class_balance(strong_small):
    sub = stratified_subsample(strong_small, 100, 3)
    assert sub.n_rows == 100
    assert abs(sub.y.mean() - strong_small.y.mean()) <= 0.01
    again = stratified_subsample(strong_small, 100, 3)
    assert np.array_equal(sub.rows, again.rows)
    assert len(set(stratified_indices(strong_small.y, 100, 3))) == 100
    with pytest.raises(InsufficientRows):
        stratified_subsample(strong_small, 10_000, 3)


def test_train_test_split_partitions(strong_small):
    train, test = train_test_split(strong_small, 0.2, 1)
    assert (train.n_rows, test.n_rows) == (480, 120)
    both = np.vstack([train.rows, test.rows])
    assert np.array_equal(np.sort(both, axis=0), np.sort(strong_small.rows, axis=0))
