"""Empirical surrogate nets: restrictions, tables, training, persistence."""

import numpy as np
import pytest

from dieseltwin.engine import GroundTruthEmpiricals
from dieseltwin.constants import EngineConstants
from dieseltwin.nn import init_params
from dieseltwin.sim import TimeSeriesDataset
from dieseltwin.surrogates import (
    SCHEMAS,
    SURROGATE_NAMES,
    SurrogateEmpiricals,
    SurrogateSet,
    TrainedSurrogate,
    build_training_table,
    rel_l2,
    train_surrogate,
)
from dieseltwin.surrogates.empirical import DROPOUT, HIDDEN, _feature


def _untrained_set(seed=0) -> SurrogateSet:
    """Architecturally complete set with random weights (restriction tests)."""
    rng = np.random.default_rng(seed)
    nets = {}
    for name, schema in SCHEMAS.items():
        from dieseltwin.nn import DenseNetSpec

        spec = DenseNetSpec((len(schema.inputs), *HIDDEN, 1), schema.output, dropout=DROPOUT)
        params = init_params(spec, rng)
        params[-1][1][:] = rng.normal(0, 3)  # push outputs around
        n_in = len(schema.inputs)
        nets[name] = TrainedSurrogate(
            schema, spec, params, np.zeros(n_in), np.ones(n_in), np.nan, 0
        )
    return SurrogateSet(nets)


ENVELOPES = {
    "eta_vol": [(0.5e5, 3e5), (500, 2000)],
    "f_egr": [(-60, 120)],
    "F_vgt_pit": [(0, 100), (0.2, 1.0)],
    "eta_tm": [(800, 8000), (350, 1200), (0.2, 1.0)],
    "eta_c": [(0.005, 0.06), (0.4, 3.0)],
    "phi_c": [(230, 320), (0.4, 3.0), (800, 8000)],
}


def test_restrictions_hold_for_arbitrary_inputs():
    # Fuzz each net over 5x its training envelope; the restriction must
    # bound every prediction regardless of what the raw net produces.
    sset = _untrained_set()
    rng = np.random.default_rng(1)
    for name, ranges in ENVELOPES.items():
        feats = []
        for lo, hi in ranges:
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            feats.append(mid + 5.0 * half * (2 * rng.random(400) - 1))
        y = np.asarray(sset.predict(name, feats, mask_seed=7))
        if name == "f_egr" or name == "phi_c":
            assert np.all((y > 0.0) & (y < 1.0))
        elif name == "F_vgt_pit":
            assert np.all((y > 0.0) & (y < 1.1))
        elif name == "eta_tm":
            assert np.all(y <= 0.818)
        elif name == "eta_c":
            assert np.all((y >= 0.2) & (y < 1.0))


def test_eta_tm_cap_and_eta_c_floor_bind():
    sset = _untrained_set(seed=3)
    rng = np.random.default_rng(2)
    x = [rng.uniform(*r, size=2000) for r in ENVELOPES["eta_tm"]]
    y = np.asarray(sset.predict("eta_tm", x))
    assert np.any(y == 0.818), "cap never engaged over a wide fuzz"
    x = [rng.uniform(*r, size=2000) for r in ENVELOPES["eta_c"]]
    y = np.asarray(sset.predict("eta_c", x))
    assert np.any(y == 0.2), "floor never engaged over a wide fuzz"


def test_mask_seed_controls_variability():
    sset = _untrained_set()
    feats = [np.linspace(1e5, 2e5, 50), np.linspace(800, 1500, 50)]
    a = np.asarray(sset.predict("eta_vol", feats, mask_seed=1))
    b = np.asarray(sset.predict("eta_vol", feats, mask_seed=1))
    c = np.asarray(sset.predict("eta_vol", feats, mask_seed=2))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


# -- training tables ----------------------------------------------------------


def test_build_training_table_refuses_empty():
    with pytest.raises(ValueError):
        build_training_table([])


def test_f_egr_trains_from_first_case_only(lab_cases):
    tables = build_training_table(list(lab_cases.values()))
    n1 = len(lab_cases["case1"])
    assert tables["f_egr"][0].shape[0] == n1
    assert tables["eta_vol"][0].shape[0] == sum(len(d) for d in lab_cases.values())


def test_labels_match_ground_truth_formulas(lab_cases):
    # Regenerate the volumetric-efficiency labels from the closed form on
    # the same rows; they must match the stored channel exactly.
    ds = lab_cases["case2"]
    gt = GroundTruthEmpiricals(EngineConstants())
    regen = gt.eta_vol(ds.channels["p_im"], ds.channels["n_e"])
    tables = build_training_table([ds])
    np.testing.assert_allclose(regen, tables["eta_vol"][1], rtol=1e-12)


def test_missing_channel_raises():
    ds = TimeSeriesDataset(
        t=np.arange(10.0), channels={"p_im": np.ones(10)}, dt=1.0,
        meta={"case_id": "case1", "ambient": {"T_amb": 300.0}},
    )
    with pytest.raises(KeyError):
        build_training_table([ds])


# -- training -----------------------------------------------------------------


def test_constant_labels_learned_quickly():
    rng = np.random.default_rng(0)
    X = rng.uniform(0.0, 1.0, size=(400, 2))
    y = np.full(400, 0.91)
    net = train_surrogate(
        "eta_vol", (X, y), seed=1, epochs=2000, patience=2000, label_noise=0.0
    )
    assert net.train_rel_l2 < 1e-3


def test_training_refuses_empty_table():
    with pytest.raises(ValueError):
        train_surrogate("eta_vol", (np.empty((0, 2)), np.empty(0)), epochs=10)


def test_desk_eta_vol_fit_under_2_percent(surrogate_set, field_case):
    net = surrogate_set["eta_vol"]
    feats = [_feature(field_case, ch) for ch in net.schema.inputs]
    err = rel_l2(np.asarray(net.predict(feats)), field_case.channels["eta_vol"])
    assert err < 0.02


def test_all_surrogates_under_5_percent_on_field_case(surrogate_set, field_case):
    for name in SURROGATE_NAMES:
        net = surrogate_set[name]
        feats = [_feature(field_case, ch) for ch in net.schema.inputs]
        truth = field_case.channels[net.schema.label_channel]
        pred = np.asarray(net.predict(feats))
        if net.schema.row_filter is not None:
            keep = net.schema.row_filter(np.column_stack(feats), truth)
            pred, truth = pred[keep], truth[keep]
        assert rel_l2(pred, truth) < 0.05, name


# -- persistence --------------------------------------------------------------


def test_checkpoint_roundtrip_with_restriction_and_normalization(tmp_path, surrogate_set):
    surrogate_set.save(tmp_path)
    back = SurrogateSet.load(tmp_path)
    import json

    manifest = json.loads((tmp_path / "eta_tm.json").read_text())
    assert manifest["clamp"] == ["min", 0.818]
    assert manifest["dropout"] == pytest.approx(0.01)
    assert "lo" in manifest["normalization"] and "hi" in manifest["normalization"]
    feats = [np.linspace(1000, 6000, 20), np.linspace(500, 900, 20), np.linspace(0.3, 0.9, 20)]
    np.testing.assert_array_equal(
        np.asarray(back.predict("eta_tm", feats)),
        np.asarray(surrogate_set.predict("eta_tm", feats)),
    )


def test_empirical_source_adapter_matches_direct_predict(surrogate_set):
    src = SurrogateEmpiricals(surrogate_set, mask_seed=42)
    src2 = SurrogateEmpiricals(surrogate_set, mask_seed=42)
    p = np.linspace(1.2e5, 2.2e5, 30)
    n = np.linspace(800, 1700, 30)
    np.testing.assert_array_equal(
        np.asarray(src.eta_vol(p, n)), np.asarray(src2.eta_vol(p, n))
    )
