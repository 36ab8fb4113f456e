import gzip
import json
import subprocess
import sys

import numpy as np
import pytest

from mfm_wishart.cli import aggregate, build_sampler_config, build_parser, contingency, main
from mfm_wishart.errors import (ConfigError, DataError, NonNumericCell, NonSpdObservation,
                                RaggedSeries, ZeroDiagonal)
from mfm_wishart.io import (DatasetBundle, read_dataset, read_json, read_labels, read_result,
                            read_trace, write_dataset, write_json, write_labels, write_trace)
from mfm_wishart.mfm_prior import DpmPriorSpec, MfmPriorSpec
from mfm_wishart.pipeline import (connectivity_matrices, parse_channels, read_table,
                                  sample_correlation)
from mfm_wishart.sampler import SamplerConfig, run
from mfm_wishart.wishart import PriorHyper


def small_config(tmp_path, **extra):
    cfg = {"setting": "small", "k0": 3, "n": 30, "seed": 5}
    cfg.update(extra)
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(cfg))
    return path


# -- file formats ------------------------------------------------------------------------------

def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 3, 3))
    mats = a @ a.transpose(0, 2, 1) + np.eye(3) * rng.uniform(0.1, 1.0)
    b = DatasetBundle(mats, [0, 1, 1, 0], ["s1", "s2", "s3", "s4"], {"note": "x", "phi": 0.1})
    for name in ("d.json", "d.json.gz"):
        write_dataset(tmp_path / name, b)
        r = read_dataset(tmp_path / name)
        assert np.array_equal(r.matrices, b.matrices)
        assert r.labels.tolist() == [0, 1, 1, 0]
        assert r.subject_ids == b.subject_ids and r.meta == b.meta
    # gzip output is byte-stable
    write_dataset(tmp_path / "e.json.gz", b)
    assert (tmp_path / "d.json.gz").read_bytes() == (tmp_path / "e.json.gz").read_bytes()


def test_dataset_validation():
    with pytest.raises(NonSpdObservation):
        DatasetBundle([np.eye(2), -np.eye(2)])
    with pytest.raises(DataError):
        DatasetBundle([np.eye(2)], labels=[0, 1])


def test_trace_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    a = rng.standard_normal((10, 2, 2))
    data = a @ a.transpose(0, 2, 1) + np.eye(2)
    tr = run(data, SamplerConfig(12, 2, PriorHyper.default(2), seed=4))
    write_trace(tmp_path / "t.json.gz", tr)
    assert read_trace(tmp_path / "t.json.gz") == tr


def test_config_round_trip_through_json(tmp_path):
    for model in (MfmPriorSpec(0.5, 2.0), DpmPriorSpec(1.5)):
        cfg = SamplerConfig(50, 10, PriorHyper.default(3), model=model, seed=9, nu_init=7.25)
        write_json(tmp_path / "c.json", cfg.to_dict())
        assert SamplerConfig.from_dict(read_json(tmp_path / "c.json")) == cfg


def test_labels_files(tmp_path):
    write_labels(tmp_path / "l.json", [0, 0, 1], "pam", 2)
    assert read_labels(tmp_path / "l.json").tolist() == [0, 0, 1]
    write_dataset(tmp_path / "d.json", DatasetBundle([np.eye(2)] * 3, labels=[1, 1, 0]))
    assert read_labels(tmp_path / "d.json").tolist() == [1, 1, 0]
    write_dataset(tmp_path / "u.json", DatasetBundle([np.eye(2)] * 3))
    with pytest.raises(DataError):
        read_labels(tmp_path / "u.json")


def test_bad_json_reports_location(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"a": 1,\n "b": }')
    with pytest.raises(ConfigError, match="line 2"):
        read_json(p)
    with pytest.raises(ConfigError):
        read_json(tmp_path / "missing.json")


# -- pipeline ------------------------------------------------------------------------------------

def test_parse_channels():
    assert parse_channels("40-46") == list(range(40, 47))
    assert parse_channels("1,3,5-7") == [1, 3, 5, 6, 7]
    for bad in ("5-3", "a", "1,1"):
        with pytest.raises(ConfigError):
            parse_channels(bad)


def test_read_table(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("t,x,y\n1,2,3\n4,5,6\n")
    assert read_table(p, skip_header=True).tolist() == [[1, 2, 3], [4, 5, 6]]
    p.write_text("1 2\n3 4\n")
    assert read_table(p).shape == (2, 2)
    p.write_text("1,2\n3,oops\n")
    with pytest.raises(NonNumericCell) as err:
        read_table(p)
    assert (err.value.row, err.value.col) == (2, 2)
    p.write_text("1,2\n3\n")
    with pytest.raises(RaggedSeries):
        read_table(p)


def test_pipeline_degenerate_channels():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((200, 3))
    collinear = np.column_stack([x, 2 * x[:, 0] + 1])
    with pytest.raises(NonSpdObservation):
        connectivity_matrices([collinear], [1, 4])
    const = np.column_stack([x, np.full(200, 3.3)])
    with pytest.raises(ZeroDiagonal):
        connectivity_matrices([const], [1, 2, 4])


def test_pipeline_white_noise():
    rng = np.random.default_rng(3)
    T, p = 5000, 7
    r = sample_correlation(rng.standard_normal((T, p))).entries
    off = r[~np.eye(p, dtype=bool)]
    assert np.all(np.abs(off) < 3 / np.sqrt(T))


def test_sample_correlation_matches_numpy():
    x = np.random.default_rng(4).standard_normal((50, 4))
    np.testing.assert_allclose(sample_correlation(x).entries, np.corrcoef(x.T), atol=1e-14)


def test_connectivity_cropping():
    rng = np.random.default_rng(5)
    tables = [rng.standard_normal((120, 5)), rng.standard_normal((100, 5))]
    mats, length = connectivity_matrices(tables, [2, 3, 4])
    assert length == 100 and mats.shape == (2, 3, 3)
    np.testing.assert_allclose(mats[0], np.corrcoef(tables[0][:100, 1:4].T), atol=1e-14)
    mats0, _ = connectivity_matrices(tables, [1, 2, 3], one_based=False)
    np.testing.assert_allclose(mats0, mats)


# -- CLI -------------------------------------------------------------------------------------------

def test_cli_simulate_fit_refit(tmp_path, capsys):
    cfg = small_config(tmp_path)
    ds = tmp_path / "ds.json"
    assert main(["simulate", str(cfg), "--out", str(ds)]) == 0
    bundle = read_dataset(ds)
    assert (bundle.n, bundle.p) == (30, 3)
    res = tmp_path / "fit.json"
    argv = ["fit", str(ds), "--out", str(res), "--seed", "3", "--iterations", "30",
            "--burn-in", "10"]
    assert main(argv) == 0
    first = (tmp_path / "fit.trace.json.gz").read_bytes()
    result = read_result(res)
    assert result["draws"] == 20 and result["model"] == "mfm"
    assert set(result["truth"]) == {"k0", "ari", "k_correct"}
    assert (tmp_path / "fit.timing.json").is_file()
    # identical invocation: identical bytes
    assert main(argv) == 0
    assert (tmp_path / "fit.trace.json.gz").read_bytes() == first
    # re-run from the result file's embedded config
    res2 = tmp_path / "refit.json"
    assert main(["fit", str(ds), "--config", str(res), "--out", str(res2)]) == 0
    assert (tmp_path / "refit.trace.json.gz").read_bytes() == first


def test_cli_dpm_switches_only_weight_rule(tmp_path):
    args = build_parser().parse_args(["fit", "x", "--out", "y", "--model", "dpm", "--seed", "1"])
    dpm = build_sampler_config({}, 3, args)
    args = build_parser().parse_args(["fit", "x", "--out", "y", "--seed", "1"])
    mfm = build_sampler_config({}, 3, args)
    assert isinstance(dpm.model, DpmPriorSpec) and isinstance(mfm.model, MfmPriorSpec)
    d, m = dpm.to_dict(), mfm.to_dict()
    d.pop("model"), m.pop("model")
    assert d == m
    assert mfm.prior == PriorHyper.default(3) and mfm.iterations == 10_000


def test_cli_baselines_evaluate_report(tmp_path):
    ds = tmp_path / "ds.json"
    main(["simulate", str(small_config(tmp_path)), "--out", str(ds)])
    res = tmp_path / "fit.json"
    main(["fit", str(ds), "--out", str(res), "--seed", "1", "--iterations", "20",
          "--burn-in", "5"])
    lab = tmp_path / "hc.json"
    assert main(["baselines", str(ds), "--from-result", str(res), "--out", str(lab)]) == 0
    assert (tmp_path / "hc.ward.json").is_file() and (tmp_path / "hc.pam.json").is_file()
    assert main(["baselines", str(ds), "--k", "3", "--method", "pam", "--out", str(lab)]) == 0
    assert read_labels(lab).size == 30
    ev = tmp_path / "ev.json"
    assert main(["evaluate", str(res), str(lab), "--truth", str(ds), "--out", str(ev)]) == 0
    report = read_json(ev)
    assert len(report["estimates"]) == 2 and "ari" in report["estimates"][1]
    rep = tmp_path / "rep.json"
    assert main(["report", str(res), str(res), "--out", str(rep)]) == 0
    grp = read_json(rep)["groups"]["mfm"]
    assert grp["replicates"] == 2 and grp["ari"]["sd"] == 0.0


def test_cli_contingency(tmp_path, capsys):
    out = tmp_path / "ev.json"
    assert main(["evaluate", "--contingency", "26,29,25,19", "--out", str(out)]) == 0
    assert "p = 0.420" in capsys.readouterr().out
    assert read_json(out)["fisher_p"] == pytest.approx(0.420, abs=5e-4)
    assert contingency([0, 0, 1], [1, 0, 0]).tolist() == [[1, 1], [1, 0]]


def test_aggregate_single_passthrough():
    r = {"model": "mfm", "dahl": {"k_hat": 3}, "nu": {"mean": 10.5},
         "truth": {"ari": 0.9, "k_correct": True}}
    out = aggregate([(r, 1.5)])["mfm"]
    assert out["ari"] == {"mean": 0.9, "sd": 0.0}
    assert out["k_accuracy"] == 1.0 and out["seconds"]["mean"] == 1.5


def test_cli_exit_codes(tmp_path):
    cfg = tmp_path / "noseed.json"
    cfg.write_text(json.dumps({"setting": "small", "n": 30}))
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "x.json")]) == 2
    bad = tmp_path / "bad.json"
    write_json(bad, {"format": "mfm-wishart-dataset", "version": 1, "p": 2, "n": 1,
                     "matrices": [[[1.0, 2.0], [2.0, 1.0]]]})
    assert main(["fit", str(bad), "--seed", "1", "--out", str(tmp_path / "f.json")]) == 3
    assert main(["evaluate", "--contingency", "1,2,3", "--out", str(tmp_path / "e.json")]) == 2
    assert main(["evaluate", "--contingency", "0,0,1,2", "--out", str(tmp_path / "e.json")]) == 3


def test_cli_entry_point(tmp_path):
    cfg = tmp_path / "noseed.json"
    cfg.write_text(json.dumps({"setting": "small", "n": 30}))
    proc = subprocess.run([sys.executable, "-m", "mfm_wishart.cli", "simulate", str(cfg),
                           "--out", str(tmp_path / "x.json")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "seed" in proc.stderr


def test_var1_simulate_picks_T(tmp_path):
    cfg = small_config(tmp_path, setting="var1", matrix_setting="medium", phi=0.5)
    out = tmp_path / "v.json.gz"
    assert main(["simulate", str(cfg), "--out", str(out)]) == 0
    with gzip.open(out, "rt") as fh:
        assert json.load(fh)["meta"]["T"] == 16
