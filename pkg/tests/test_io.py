import json
from dataclasses import replace

import numpy as np
import pytest

from srmr.core import SpatialDataset
from srmr.exceptions import InvalidParameterError
from srmr.fit import select_k, srmr_fit
from srmr.io import (
    REPORT_JSON_SCHEMA,
    ParseError,
    dumps_report,
    fit_to_report,
    load_scenario,
    read_dataset,
    read_report,
    read_truth,
    report_to_fit,
    write_dataset,
    write_report,
    write_scenario,
    write_truth,
)
from srmr.simgen import DEFAULT, generate


@pytest.fixture(scope="module")
def sample():
    lds = generate(replace(DEFAULT, seed=21, type2_rate=0.1))
    return lds, srmr_fit(lds.data, 2, seed=21, J=3)


def test_dataset_round_trip_is_bit_exact(tmp_path, sample):
    lds, _ = sample
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_dataset(a, lds.data)
    ds = read_dataset(a)
    np.testing.assert_array_equal(ds.y, lds.data.y)
    np.testing.assert_array_equal(ds.X, lds.data.X)
    np.testing.assert_array_equal(ds.S, lds.data.S)
    write_dataset(b, ds)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "y,x1,sx,sy"


def test_dataset_with_two_predictors(tmp_path, rng):
    ds = SpatialDataset.from_predictors(rng.normal(size=5), rng.normal(size=(5, 2)),
                                        rng.normal(size=(5, 2)))
    write_dataset(tmp_path / "d.csv", ds)
    back = read_dataset(tmp_path / "d.csv")
    assert back.p == 2
    np.testing.assert_array_equal(back.X, ds.X)


@pytest.mark.parametrize("text, line", [
    ("", 1),
    ("y,x1,lat,lon\n1,2,3,4\n", 1),
    ("y,x1,sx,sy\n1,2,3\n", 2),
    ("y,x1,sx,sy\n1,2,3,4\n1,abc,3,4\n", 3),
    ("y,x1,sx,sy\n1,2,3,nan\n", 2),
    ("y,x1,sx,sy\n", 2),
])
def test_dataset_parse_errors_carry_line_numbers(tmp_path, text, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ParseError) as info:
        read_dataset(p)
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


def test_truth_round_trip(tmp_path, sample):
    lds, _ = sample
    write_truth(tmp_path / "t.csv", lds)
    t = read_truth(tmp_path / "t.csv")
    np.testing.assert_array_equal(t["labels"], lds.true_labels)
    np.testing.assert_array_equal(t["type1"], lds.true_type1)
    np.testing.assert_array_equal(t["type2"], lds.true_type2)
    np.testing.assert_array_equal(t["components"], lds.components)
    (tmp_path / "bad.csv").write_text("row,label,outlier_type,beta_component\n0,1,odd,1\n")
    with pytest.raises(ParseError):
        read_truth(tmp_path / "bad.csv")


def test_scenario_round_trip(tmp_path):
    cfg = replace(DEFAULT, K=3, betas=((0, 1), (1, 2), (2, 3)), sigmas=(0.1, 0.2, 0.3),
                  mixing=(0.3, 0.3, 0.3, 0.1), seed=9, name="custom")
    write_scenario(tmp_path / "s.json", cfg)
    assert load_scenario(tmp_path / "s.json") == cfg
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[1, 2]")
    with pytest.raises(InvalidParameterError):
        load_scenario(tmp_path / "list.json")


def test_report_schema_and_round_trip(tmp_path, sample):
    jsonschema = pytest.importorskip("jsonschema")
    lds, fit = sample
    rep = fit_to_report(fit, lds.data, options={"lambda": 0.5})
    jsonschema.validate(rep, REPORT_JSON_SCHEMA)
    write_report(tmp_path / "r.json", rep)
    back = report_to_fit(read_report(tmp_path / "r.json"))
    np.testing.assert_array_equal(back.labels, fit.labels)
    np.testing.assert_array_equal(back.type1, fit.type1)
    np.testing.assert_array_equal(back.type2, fit.type2)
    np.testing.assert_array_equal(back.model.betas, fit.model.betas)
    np.testing.assert_array_equal(back.model.centroids, fit.model.centroids)
    assert back.bic == fit.bic and back.trimmed_loglik == fit.trimmed_loglik
    # byte-stable re-serialisation
    assert dumps_report(fit_to_report(back, lds.data, options={"lambda": 0.5})) == dumps_report(rep)


def test_report_for_selected_k_validates(sample):
    jsonschema = pytest.importorskip("jsonschema")
    lds, _ = sample
    sel = select_k(lds.data, [1, 2], seed=0, J=2)
    rep = fit_to_report(sel, lds.data)
    jsonschema.validate(rep, REPORT_JSON_SCHEMA)
    assert rep["selected_k"] == sel.K
    assert set(rep["bic_by_k"]) == {"1", "2"}


def test_read_report_rejects_other_documents(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps({"schema": "other"}))
    with pytest.raises(InvalidParameterError):
        read_report(p)
    p.write_text("{")
    with pytest.raises(ParseError):
        read_report(p)
