"""Windowed operator networks: causal structure, forward algebra, training."""

import numpy as np
import pytest

from dieseltwin.deeponet import (
    EGR_SPEC,
    VGT_SPEC,
    WINDOW_POINTS,
    CausalDeepONet,
    DeepONetSpec,
    assemble_causal_inputs,
    causal_history_matrix,
    train_deeponet,
    trunk_grid,
    windows_from_dataset,
)
from dieseltwin.deeponet.model import window_loss
from dieseltwin.constants import EngineConstants


def test_history_matrix_constant_input():
    c = 7.5
    H = causal_history_matrix(np.full(WINDOW_POINTS, c))
    for j in (0, 1, 5, 300):
        row = H[j]
        assert np.all(row[: j + 1] == c)
        assert np.all(row[j + 1 :] == 0.0)


def test_history_matrix_first_row_single_entry():
    u = np.arange(WINDOW_POINTS, dtype=float) + 1.0
    H = causal_history_matrix(u)
    assert H[0, 0] == u[0]
    assert np.count_nonzero(H[0]) == 1


def test_history_matrix_impulse():
    u = np.zeros(WINDOW_POINTS)
    u[0] = 3.0
    H = causal_history_matrix(u)
    np.testing.assert_array_equal(H[:, -1], np.zeros(WINDOW_POINTS - 1).tolist() + [3.0])
    # The impulse at t0 appears on the reversed diagonal: row j, column j.
    assert np.all(np.diag(H) == 3.0)
    H_off = H - np.diag(np.diag(H))
    assert np.all(H_off == 0.0)


def test_history_matrix_rejects_wrong_length():
    with pytest.raises(ValueError):
        causal_history_matrix(np.zeros(300))


def test_assemble_returns_scaled_trunk():
    u = np.random.default_rng(0).uniform(0, 100, WINDOW_POINTS)
    H, t, ics = assemble_causal_inputs(u, (10.0, 20.0))
    assert t.shape == (WINDOW_POINTS, 1)
    assert t[0, 0] == -1.0 and t[-1, 0] == 1.0
    assert ics.tolist() == [10.0, 20.0]


def test_causality_probe():
    # Perturbing the input at sample j must leave outputs before j exactly
    # unchanged: rows of the history matrix never see later samples.
    model = CausalDeepONet.initialize(VGT_SPEC, np.random.default_rng(3))
    model.u_scale = 100.0
    rng = np.random.default_rng(4)
    u = rng.uniform(20, 80, WINDOW_POINTS)
    base = model.predict_window(u, (40.0,))
    for j in (1, 50, 200):
        u2 = u.copy()
        u2[j] += 25.0
        pert = model.predict_window(u2, (40.0,))
        np.testing.assert_array_equal(pert[:j], base[:j])
        assert np.any(pert[j:] != base[j:])


def test_no_bias_in_basis_sum():
    # Zeroing the trunk's last layer kills the whole sum: the output is
    # exactly transform(0) everywhere, proving there is no additive bias.
    model = CausalDeepONet.initialize(VGT_SPEC, np.random.default_rng(5))
    model.u_scale = 100.0
    W, b = model.params["trunk"][-1]
    model.params["trunk"][-1] = (np.zeros_like(W), np.zeros_like(b))
    out = model.predict_window(np.random.default_rng(6).uniform(0, 100, WINDOW_POINTS), (30.0,))
    from scipy.special import expit

    assert np.allclose(out, expit(0.0) * 100.0)


def test_single_basis_constant_nets():
    # p = 1 with all sub-nets forced to output 1 gives transform(1*1*1).
    spec = DeepONetSpec("probe", outputs=("u_vgt_t",), p=1, hist_hidden=(4,), ic_hidden=(4,), trunk_hidden=(4,))
    model = CausalDeepONet.initialize(spec, np.random.default_rng(0))
    model.u_scale = 1.0
    for key in model.params:
        layers = model.params[key]
        zeroed = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
        W_last, b_last = zeroed[-1]
        zeroed[-1] = (W_last, b_last + 1.0)
        model.params[key] = zeroed
    out = model.predict_window(np.zeros(WINDOW_POINTS), (0.0,))
    from scipy.special import expit

    assert np.allclose(out, expit(1.0) * 100.0)


def test_loss_weights_combine_exactly():
    assert EGR_SPEC.loss_weights == (1.0, 100.0)
    model = CausalDeepONet.initialize(EGR_SPEC, np.random.default_rng(1))
    model.u_scale = 100.0
    rng = np.random.default_rng(2)
    u = rng.uniform(10, 90, WINDOW_POINTS)
    labels = np.column_stack([rng.uniform(0, 100, WINDOW_POINTS) for _ in range(2)])
    total, per = window_loss(model, u, labels)
    assert total == pytest.approx(1.0 * per["u_egr1_t"] + 100.0 * per["u_egr2_t"], rel=1e-12)


def test_train_rejects_empty():
    model = CausalDeepONet.initialize(VGT_SPEC, np.random.default_rng(0))
    with pytest.raises(ValueError):
        train_deeponet(model, [], epochs=1)


def test_checkpoint_roundtrip(tmp_path):
    model = CausalDeepONet.initialize(EGR_SPEC, np.random.default_rng(9))
    model.u_scale = 87.3
    model.save(tmp_path / "egr")
    back = CausalDeepONet.load(tmp_path / "egr")
    assert back.u_scale == 87.3
    assert back.spec == EGR_SPEC
    u = np.random.default_rng(10).uniform(0, 80, WINDOW_POINTS)
    np.testing.assert_array_equal(
        back.predict_window(u, (5.0, 6.0)), model.predict_window(u, (5.0, 6.0))
    )


# -- trained-model oracles (session fixtures) ---------------------------------


def test_desk_errors_under_5_percent(deeponets):
    d1, d2 = deeponets
    for ch, err in {**d1.report.test_rel_l2, **d2.report.test_rel_l2}.items():
        assert err < 0.05, f"{ch}: {err:.3%}"


def test_step_response_matches_first_order_ode(deeponets):
    # A constant command from a zero-ish initial condition follows the
    # analytic first-order response; the operator network must reproduce
    # it within a few times its test error.
    _, d2 = deeponets
    k = EngineConstants()
    U = 70.0
    t = np.arange(WINDOW_POINTS) * 0.2
    exact = U * (1.0 - np.exp(-t / k.tau_vgt)) + 30.0 * np.exp(-t / k.tau_vgt)
    pred = d2.predict_window(np.full(WINDOW_POINTS, U), (30.0,))[:, 0]
    rel = np.linalg.norm(pred - exact) / np.linalg.norm(exact)
    assert rel < 3.0 * max(d2.report.test_rel_l2["u_vgt_t"], 0.01)


def test_constant_window_monotone_toward_input(deeponets):
    _, d2 = deeponets
    U = 75.0
    pred = d2.predict_window(np.full(WINDOW_POINTS, U), (35.0,))[:, 0]
    # Ends near the commanded value and increases overall.
    assert abs(pred[-1] - U) < 2.0 * max(d2.report.test_rel_l2["u_vgt_t"], 0.01) * U + 1.0
    assert pred[-1] > pred[0]


def test_chained_windows_pass_endpoint(deeponets, field_case):
    d1, _ = deeponets
    w = windows_from_dataset(field_case, "u_egr_del", ("u_egr1_t", "u_egr2_t"), 300)
    first = d1.predict_window(w[0][0], w[0][1][0, :])
    ic_next = first[-1, :]
    second = d1.predict_window(w[1][0], ic_next)
    # Plumbing identity: the next window starts from the passed endpoint.
    third = d1.predict_window(w[1][0], ic_next.copy())
    np.testing.assert_array_equal(second, third)


def test_label_noise_changes_test_error_marginally(native_cases, field_case):
    # Training with 3% label noise must shift the clean-label test error by
    # less than 1.5 percentage points (desk-scale mirror of the reference
    # robustness result).
    w = windows_from_dataset(native_cases["case1"], "u_vgt_del", ("u_vgt_t",), 40)
    w += windows_from_dataset(native_cases["case7"], "u_vgt_del", ("u_vgt_t",), 40)
    tests = windows_from_dataset(field_case, "u_vgt_del", ("u_vgt_t",), 600)
    errs = {}
    for noise in (0.0, 0.03):
        model = CausalDeepONet.initialize(VGT_SPEC, np.random.default_rng(8))
        model = train_deeponet(model, w, tests, seed=9, epochs=8000, label_noise=noise)
        errs[noise] = model.report.test_rel_l2["u_vgt_t"]
    assert abs(errs[0.03] - errs[0.0]) < 0.015
