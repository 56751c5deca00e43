import argparse
import csv
import json

import numpy as np
import pytest

from clusterps import codes
from clusterps.cli import main, parse_polynomial
from clusterps.dem import parse_dem


def test_parse_polynomial():
    assert parse_polynomial("x^3+y+y^2") == [(3, 0), (0, 1), (0, 2)]
    assert parse_polynomial("1 + x*y^2") == [(0, 0), (1, 2)]
    for bad in ("x^", "z", "x++y"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_polynomial(bad)


def test_build_dem_stdout_round_trips(capsys):
    assert main(["build-dem", "--code", "rep", "--d", "5", "--rounds", "4", "--p", "0.02"]) == 0
    model = parse_dem(capsys.readouterr().out)
    ref = codes.phenomenological_dem(codes.repetition_code(5), 4, 0.02, 0.02)
    assert (model.check_matrix != ref.check_matrix).nnz == 0
    assert np.array_equal(model.priors, ref.priors)
    assert np.array_equal(model.detector_times, ref.detector_times)


def test_build_dem_bb_default_polynomials(tmp_path):
    out = tmp_path / "bb.dem"
    assert main(["build-dem", "--code", "bb", "--rounds", "2", "--p-data", "0.01", "--p-meas", "0.02",
                 "--bb-a", "x^3+y+y^2", "--bb-b", "y^3+x+x^2", "--out", str(out)]) == 0
    model = parse_dem(out.read_text())
    assert model.num_observables == 12 and model.num_detectors == 2 * 36


def test_simulate_from_dem_file(tmp_path, capsys):
    dem = tmp_path / "rep.dem"
    main(["build-dem", "--code", "rep", "--d", "5", "--p", "0.03", "--out", str(dem)])
    out = tmp_path / "res.csv"
    assert main(["simulate", "--dem", str(dem), "--shots", "500", "--seed", "4", "--metric", "llr:2,density",
                 "--cutoffs", "0,0.1,1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6 and rows[0]["code"] == "rep" and rows[0]["mode"] == "global"
    man = json.loads((tmp_path / "res.json").read_text())
    assert man["experiments"][0]["config"]["shots"] == 500


def test_simulate_realtime(tmp_path):
    out = tmp_path / "rt.csv"
    assert main(["simulate", "--code", "surface", "--d", "3", "--rounds", "4", "--p", "0.02", "--shots", "300",
                 "--mode", "realtime", "--window", "2", "--commit", "1", "--lookback", "2",
                 "--metric", "size:2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert {r["W"] for r in rows} == {"2"} and {r["L"] for r in rows} == {"2"}
    assert rows[-1]["p_abort"] == "0.0"


def test_simulate_rejects_bad_inputs(tmp_path, capsys):
    assert main(["simulate", "--code", "rep", "--p", "0.1", "--shots", "10", "--mode", "realtime",
                 "--metric", "weight", "--out", str(tmp_path / "x.csv")]) == 2
    assert "cluster metrics" in capsys.readouterr().err
    bad = tmp_path / "bad.dem"
    bad.write_text("error(0.1) D0\nbogus line\n")
    assert main(["simulate", "--dem", str(bad), "--shots", "10"]) == 2
    with pytest.raises(SystemExit):
        main(["simulate", "--code", "rep", "--shots", "10"])
    with pytest.raises(SystemExit):
        main(["simulate", "--code", "rep", "--p", "0.7", "--shots", "10"])
