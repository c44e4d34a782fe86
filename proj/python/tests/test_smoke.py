import math

import numpy as np
import pytest

import hyperscore as hs

TINY = {"D": 16, "D_q": 8, "L": 2, "channels": 2, "grid": 2, "encoder_rank": 8, "mlp_hidden": 16}


def test_synth_bundle_shapes_and_determinism():
    b = hs.synth_bundle(3, views=2, patches=4, text_tokens=3, dim=16)
    assert b.dims == (2, 4, 3, 16)
    assert len(b.views) == 2 and b.views[0].shape == (4, 16)
    assert b.text_tokens.shape == (3, 16)
    again = hs.synth_bundle(3, views=2, patches=4, text_tokens=3, dim=16)
    np.testing.assert_array_equal(b.views[1], again.views[1])
    assert np.abs(b.text_tokens).max() <= 1.0


def test_bundle_round_trip(tmp_path):
    b = hs.synth_bundle(1, views=2, patches=4, text_tokens=3, dim=16)
    path = tmp_path / "s.hsf"
    hs.write_bundle(b, path)
    c = hs.load_bundle(path)
    np.testing.assert_array_equal(b.text_tokens, c.text_tokens)
    assert c.eot_index == b.eot_index
    with pytest.raises(hs.FormatError):
        (tmp_path / "bad.hsf").write_bytes(b"nope")
        hs.load_bundle(tmp_path / "bad.hsf")


def test_predict_and_checkpoint(tmp_path):
    m = hs.new_model(TINY)
    b = hs.synth_bundle(5, views=2, patches=4, text_tokens=3, dim=16)
    s = m.predict(b)
    assert s.shape == (4,) and np.isfinite(s).all()
    assert m.dimension_names == ["alignment", "geometry", "texture", "overall"]
    m.save(tmp_path / "m.ckpt")
    r = hs.Model.load(tmp_path / "m.ckpt")
    np.testing.assert_array_equal(s, r.predict(b))
    assert hs.model_config(r)["D"] == 16
    with pytest.raises(hs.DimensionError):
        m.predict(hs.synth_bundle(5, views=2, patches=4, text_tokens=3, dim=8))


def test_full_scale_parameter_shapes():
    shapes = hs.new_model().parameter_shapes()
    assert shapes["hyper.transform.weight"][1] == 5488
    assert shapes["prompt.learnable"] == (48, 512)


def test_correlations():
    assert hs.plcc([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    assert hs.srcc([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert hs.krcc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(hs.UndefinedCorrelationError):
        hs.srcc([1, 1, 1], [1, 2, 3])
    fit = hs.logistic_map([0, 1, 2, 3, 4], [0, 1, 2, 3, 4])
    assert fit["rms_residual"] < 1e-6


def test_mos_and_screening():
    rows = ["subject_id,sample_id,dimension,score"]
    for s in range(4):
        for n in range(5):
            rows.append(f"u{s},x{n},overall,{4 + (n % 2)}")
    text = "\n".join(rows)
    out = hs.run_mos(text)
    assert all(out["retained"])
    assert out["mos"]["x1"] == [5.0]
    assert hs.screen_bt500(text)["rejected"] == []
    trapped = hs.run_mos(text.replace("u0,x1,overall,5", "u0,x1,overall,9"), sentinel_ids=["x1"], t_low=5)
    assert trapped["retained"] == [False, True, True, True]
    assert trapped["trapping"]["rejected"][0]["subject"] == "u0"
    assert "x1" not in trapped["mos"]
    with pytest.raises(hs.FormatError):
        hs.run_mos("")


def test_crossval_split_ratio():
    folds = hs.crossval_split([f"p{i}" for i in range(160)], 5, 0)
    assert [(len(a), len(b)) for a, b in folds] == [(128, 32)] * 5
    tested = sorted(p for _, test in folds for p in test)
    assert len(set(tested)) == 160


def test_baseline():
    b = hs.synth_bundle(2, views=2, patches=4, text_tokens=3, dim=16)
    v = hs.baseline_cosine_score(b)
    assert 0.0 <= v <= 2.5


def test_gradcheck():
    r = hs.gradcheck()
    assert r["passed"]
    assert max(r["worst_by_group"].values()) < 1e-4


def test_run_commands(tmp_path):
    dims = {"D": 16, "D_q": 8, "L": 2, "M": 2, "N_t": 3, "N_v": 4, "channels": 2, "grid": 2,
            "encoder_rank": 8, "mlp_hidden": 16}
    syn = str(tmp_path / "syn")
    code, log = hs.run("synth", dims=dims, synth__num_samples=8, paths__output_dir=syn)
    assert code == 0 and log.startswith("# hyperscore config_hash=")
    code, _ = hs.run("train", dims=dims, train__epochs=2, paths__manifest=syn + "/manifest.json",
                     paths__labels=syn + "/labels.csv", paths__output_dir=str(tmp_path / "tr"))
    assert code == 0
    assert (tmp_path / "tr" / "model.ckpt").exists()
    with pytest.raises(hs.ConfigError):
        hs.run("train", bogus__key=1)
    assert not math.isnan(hs.Model.load(tmp_path / "tr" / "model.ckpt").predict(
        hs.synth_bundle(0, views=2, patches=4, text_tokens=3, dim=16))[0])
