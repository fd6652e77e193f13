import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bgeps import BivariateSample, InvalidDataError
from bgeps.core import BgepsParams, log_likelihood
from bgeps.em import fit
from bgeps.io import (
    SCHEMA_VERSION,
    DataFileError,
    ReportFormatError,
    load_csv,
    merge_ties,
    parse_csv,
    read_report,
    write_report,
    write_sample_csv,
)
from bgeps.model_select import gof_report
from bgeps.power_series import PowerSeriesFamily
from bgeps.sampler import SimulationConfig, sample

F = PowerSeriesFamily.parse


def test_partition_example(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("1,1\n1,2\n3,2\n")
    d = load_csv(f)
    assert (d.m0, d.m1, d.m2) == (1, 1, 1)


def test_header_scale_and_blank_lines():
    d = parse_csv("y1,y2\n\n100,200\n 300 , 300 \n", scale=0.01)
    np.testing.assert_allclose(d.y1, [1.0, 3.0])
    np.testing.assert_allclose(d.y2, [2.0, 3.0])
    assert d.m0 == 1


@pytest.mark.parametrize("text,line", [("0,1\n", 1), ("y1,y2\n1,2\n-1,2\n", 3), ("1,2\nx,3\n", 2),
                                       ("1,2,3\n", 1), ("1,inf\n", 1), ("1\n", 1)])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(DataFileError) as e:
        parse_csv(text)
    assert e.value.line == line
    assert f"line {line}" in str(e.value)


def test_empty_and_bad_scale():
    with pytest.raises(InvalidDataError):
        parse_csv("y1,y2\n")
    with pytest.raises(ValueError):
        parse_csv("1,2\n", scale=0)


def test_tie_merging():
    y1, y2 = merge_ties([1.0, 1.0, 5.0], [1.005, 1.2, 5.0], 0.01)
    np.testing.assert_array_equal(y1, [1.0025, 1.0, 5.0])
    np.testing.assert_array_equal(y2, [1.0025, 1.2, 5.0])
    d = parse_csv("1,1.005\n1,1.2\n", tie_tol=0.01)
    assert d.m0 == 1
    assert parse_csv("1,1.005\n").m0 == 0
    with pytest.raises(ValueError):
        merge_ties([1.0], [1.0], -1)


@given(st.lists(st.tuples(st.floats(1e-300, 1e300), st.floats(1e-300, 1e300)), min_size=1, max_size=30))
@settings(max_examples=100, deadline=None)
def test_csv_round_trip(pairs):
    d = BivariateSample.from_pairs(pairs)
    back = parse_csv(write_sample_csv(d))
    assert back == d


def test_write_sample_csv_file(tmp_path):
    d = BivariateSample([0.1, 0.2], [0.3, 0.2])
    text = write_sample_csv(d, tmp_path / "x.csv")
    assert text.startswith("y1,y2\n")
    assert load_csv(tmp_path / "x.csv") == d


# -- reports --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def reports():
    p = BgepsParams(1.0, 0.3, 0.7, 5.0, 0.7, F("geometric"))
    d = sample(SimulationConfig(p, 150, 1))
    full = fit(d, F("geometric"))
    bge = fit(d, F("degenerate"))
    nose = fit(d, F("poisson"), compute_se=False, max_iter=3)
    g = gof_report(full.estimates, full.loglik, d, bge_loglik=bge.loglik)
    return full, bge, nose, g


def _same(a, b):
    for name in a.__dataclass_fields__:
        x, y = getattr(a, name), getattr(b, name)
        if isinstance(x, float) and math.isnan(x):
            assert math.isnan(y), name
        else:
            assert x == y, name


def test_fit_report_round_trips(reports):
    for r in reports[:3]:
        back, md = read_report(write_report(r, metadata={"k": 1}))
        _same(r, back)
        assert md == {"k": 1}


def test_gof_report_round_trip(reports):
    g = reports[3]
    back, _ = read_report(write_report(g))
    _same(g, back)
    g2 = gof_report(reports[1].estimates, reports[1].loglik, sample(SimulationConfig(reports[1].estimates, 3, 0)))
    back2, _ = read_report(write_report(g2))
    assert math.isnan(back2.aicc) and back2.lrt is None


def test_json_schema_and_determinism(reports):
    blob = write_report(reports[0], metadata={"x": 2})
    doc = json.loads(blob)
    assert doc["schema_version"] == SCHEMA_VERSION == 1
    assert doc["kind"] == "fit" and "library_version" in doc
    assert write_report(reports[0], metadata={"x": 2}) == blob
    assert "theta" not in json.loads(write_report(reports[1]))["report"]["estimates"]


def test_text_format(reports):
    txt = write_report(reports[0], "text").decode()
    for key in ("alpha1", "alpha2", "alpha3", "lambda", "theta", "-loglik"):
        assert key in txt
    gt = write_report(reports[3], "text").decode()
    for key in ("AIC", "AICC", "BIC", "K-S Y1", "K-S Y2", "K-S Max", "LRT"):
        assert key in gt
    assert "theta" not in write_report(reports[1], "text").decode()
    with pytest.raises(ValueError):
        write_report(reports[0], "xml")
    with pytest.raises(TypeError):
        write_report(object())


def test_read_report_errors():
    with pytest.raises(ReportFormatError):
        read_report(b"not json")
    with pytest.raises(ReportFormatError):
        read_report(b'{"schema_version": 2}')
    with pytest.raises(ReportFormatError):
        read_report(b'{"schema_version": 1, "kind": "fit", "report": {}}')
    with pytest.raises(ReportFormatError):
        read_report(b"[1]")


def test_loglik_survives_round_trip(reports):
    back, _ = read_report(write_report(reports[0]))
    d = sample(SimulationConfig(BgepsParams(1.0, 0.3, 0.7, 5.0, 0.7, F("geometric")), 150, 1))
    assert log_likelihood(back.estimates, d) == reports[0].loglik
