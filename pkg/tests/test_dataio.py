import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symdyn.dataio import (SYMPTOMS, DataError, Dataset, Diagnosis, TimeSeries, ZScoreScaler, load_dataset,
                           normalize_dataset, snake_case, zscore_normalize)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_empty_file_has_no_header(tmp_path):
    with pytest.raises(DataError, match="no header"):
        load_dataset(write(tmp_path, ""))


def test_missing_row_dropped(tmp_path):
    p = write(tmp_path, "id,diagnosis,a,b\nP1,GAD,1,2\nP1,GAD,,3\nP1,GAD,4,5\n")
    ds = load_dataset(p)
    assert len(ds) == 1
    ind = ds.individuals[0]
    assert ind.series.T == 2
    np.testing.assert_array_equal(ind.series.values, [[1, 2], [4, 5]])


def test_na_literal_is_missing(tmp_path):
    p = write(tmp_path, "id,diagnosis,a\nP1,MDD,NA\nP1,MDD,1\nP2,comorbid,2\n")
    ds = load_dataset(p)
    assert [i.series.T for i in ds] == [1, 1]
    assert ds.individuals[1].diagnosis is Diagnosis.COMORBID


def test_rows_grouped_in_file_order(tmp_path):
    p = write(tmp_path, "id,diagnosis,a\nB,GAD,1\nA,MDD,2\nB,GAD,3\n")
    ds = load_dataset(p)
    assert [i.id for i in ds] == ["B", "A"]
    np.testing.assert_array_equal(ds.individuals[0].series.column("a"), [1, 3])
    assert ds.n_rows == 3


def test_unknown_diagnosis(tmp_path):
    with pytest.raises(DataError, match="unknown diagnosis"):
        load_dataset(write(tmp_path, "id,diagnosis,a\nP1,PTSD,1\n"))


def test_duplicate_and_missing_headers(tmp_path):
    with pytest.raises(DataError, match="duplicate"):
        load_dataset(write(tmp_path, "id,diagnosis,a,a\nP1,GAD,1,2\n"))
    with pytest.raises(DataError, match="missing header"):
        load_dataset(write(tmp_path, "pid,diagnosis,a\nP1,GAD,1\n"))


def test_schema_maps_source_headers(tmp_path):
    p = write(tmp_path, "Participant,Dx,Felt Energetic,Felt Worried\nP1,GAD,1,2\nP1,GAD,3,4\n")
    schema = {"id": "Participant", "diagnosis": "Dx",
              "symptoms": {"Felt Energetic": snake_case("Felt Energetic"), "Felt Worried": "felt_worried"}}
    ds = load_dataset(p, schema)
    assert ds.var_names == ["felt_energetic", "felt_worried"]
    assert "felt_energetic" in SYMPTOMS and len(SYMPTOMS) == 22


def test_zscore_hand_values():
    ts = TimeSeries(np.array([[1.0], [2.0], [3.0]]), ["a"])
    np.testing.assert_allclose(zscore_normalize(ts).values[:, 0], [-1, 0, 1], atol=1e-12)


def test_zscore_constant_column_named():
    ts = TimeSeries(np.array([[5.0, 1], [5.0, 2], [5.0, 3]]), ["flat", "ok"])
    with pytest.raises(DataError, match="constant column: flat"):
        zscore_normalize(ts)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (12, 3), elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_zscore_properties(values):
    ts = TimeSeries(values, ["a", "b", "c"])
    if np.any(values.std(axis=0) < 1e-3):
        return
    z = zscore_normalize(ts)
    assert np.all(np.abs(z.values.mean(axis=0)) < 1e-10)
    np.testing.assert_allclose(z.values.std(axis=0, ddof=1), 1.0, rtol=1e-9)
    np.testing.assert_allclose(zscore_normalize(z).values, z.values, atol=1e-10)


def test_normalize_scopes(cohort):
    pooled = normalize_dataset(cohort, "pooled")
    stacked = np.vstack([i.series.values for i in pooled])
    assert np.all(np.abs(stacked.mean(axis=0)) < 1e-10)
    with pytest.raises(ValueError):
        normalize_dataset(cohort, "weekly")


def test_load_is_deterministic(tmp_path, cohort):
    from conftest import write_long_csv
    p = tmp_path / "c.csv"
    write_long_csv(p, cohort)
    a, b = load_dataset(p), load_dataset(p)
    assert all(x.series == y.series and x.id == y.id for x, y in zip(a, b))


def test_dataset_rejects_duplicate_ids():
    ts = TimeSeries(np.zeros((2, 1)), ["a"])
    from symdyn.dataio import Individual
    with pytest.raises(DataError):
        Dataset((Individual("x", Diagnosis.GAD, ts), Individual("x", Diagnosis.MDD, ts)))


def test_timeseries_csv_roundtrip(tmp_path):
    ts = TimeSeries(np.random.default_rng(0).standard_normal((5, 2)), ["u", "v"])
    ts.to_csv(tmp_path / "s.csv")
    assert TimeSeries.from_csv(tmp_path / "s.csv") == ts


def test_scaler_matches_function():
    X = np.random.default_rng(1).standard_normal((30, 4)) * 3 + 2
    out = ZScoreScaler().fit_transform(X)
    np.testing.assert_allclose(out, zscore_normalize(TimeSeries(X, list("abcd"))).values, atol=1e-12)
