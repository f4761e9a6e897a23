"""Unit tests for the optimizers and the training loop."""

import numpy as np
import numpy.testing as npt
import pytest

from nfa_lab import linalg, network, optim
from nfa_lab.datasets import Dataset, chain_monomial
from nfa_lab.network import Mlp, MlpConfig, forward, init_mlp
from nfa_lab.optim import (
    DivergenceError,
    OptimizerSpec,
    TrainLog,
    adaptive_slo_step,
    gd_step,
    mse_loss_and_ldot,
    slo_step,
    train,
)


def small_problem(n=24, d=6, seed=0):
    ds = chain_monomial(linalg.make_rng(seed), n=n, d=d, r=3)
    net = init_mlp(MlpConfig(widths=(d, 16, 1), activation="relu",
                             init_scales=(1.0, 1.0), seed=seed + 100))
    return net, ds


def compute_grads(net, ds):
    cache = forward(net, ds.x)
    _, ldot = mse_loss_and_ldot(cache.outputs, ds.y)
    return network.backward(net, cache, ldot).weight_grads


# ------------------------------------------------------------------- spec

def test_optimizer_spec_validation():
    with pytest.raises(ValueError):
        OptimizerSpec(variant="sgd", eta=0.1)
    with pytest.raises(ValueError):
        OptimizerSpec(variant="gd", eta=0.0)
    with pytest.raises(ValueError):
        OptimizerSpec(variant="slo", eta=0.1)  # speeds missing
    with pytest.raises(ValueError):
        OptimizerSpec(variant="slo", eta=0.1, speeds=(-1.0, 1.0))
    with pytest.raises(ValueError):
        OptimizerSpec(variant="gd", eta=0.1, epsilon=-1e-3)
    with pytest.raises(ValueError):
        OptimizerSpec(variant="adaptive_slo", eta=0.1, s=0.0)
    # valid ones construct fine
    OptimizerSpec(variant="gd", eta=0.05)
    OptimizerSpec(variant="slo", eta=0.03, speeds=(500.0, 0.002, 0.002), epsilon=0.1)
    OptimizerSpec(variant="adaptive_slo", eta=0.05, epsilon=0.01, s=20.0)


def test_mse_loss_and_ldot_hand_values():
    f = np.array([1.0, 3.0])
    y = np.array([0.0, 1.0])
    loss, ldot = mse_loss_and_ldot(f, y)
    assert loss == pytest.approx((1.0 + 4.0) / 4.0)  # (1/2n) sum residual^2
    npt.assert_allclose(ldot, [0.5, 1.0])
    with pytest.raises(ValueError):
        mse_loss_and_ldot(np.ones(3), np.ones(2))


# ------------------------------------------------------------------ steps

def test_gd_step_updates_in_place_and_bumps_version():
    net, ds = small_problem()
    before = [w.copy() for w in net.weights]
    grads = compute_grads(net, ds)
    v0 = net.version
    gd_step(net, grads, eta=0.1)
    assert net.version == v0 + 1
    for w, w0, g in zip(net.weights, before, grads):
        npt.assert_allclose(w, w0 - 0.1 * g, atol=1e-15)


def test_gd_step_decreases_loss_for_small_eta():
    net, ds = small_problem(seed=3)
    cache = forward(net, ds.x)
    loss0, _ = mse_loss_and_ldot(cache.outputs, ds.y)
    gd_step(net, compute_grads(net, ds), eta=0.01)
    loss1, _ = mse_loss_and_ldot(forward(net, ds.x).outputs, ds.y)
    assert loss1 < loss0


def test_gd_step_gradient_count_guard():
    net, ds = small_problem()
    with pytest.raises(ValueError):
        gd_step(net, compute_grads(net, ds)[:1], eta=0.1)


def test_slo_step_exact_displacement_at_zero_epsilon():
    """With eps = 0 each layer moves exactly eta * C_l along -grad."""
    net, ds = small_problem(seed=5)
    before = [w.copy() for w in net.weights]
    grads = compute_grads(net, ds)
    spec = OptimizerSpec(variant="slo", eta=0.05, speeds=(2.0, 0.5), epsilon=0.0)
    slo_step(net, grads, spec)
    for w, w0, g, c in zip(net.weights, before, grads, spec.speeds):
        delta = w - w0
        assert np.linalg.norm(delta) == pytest.approx(0.05 * c, rel=1e-12)
        # direction is -g
        cos = np.sum(delta * -g) / (np.linalg.norm(delta) * np.linalg.norm(g))
        assert cos == pytest.approx(1.0, abs=1e-12)


def test_slo_step_epsilon_shrinks_displacement():
    net, ds = small_problem(seed=6)
    grads = compute_grads(net, ds)
    gnorm = np.linalg.norm(grads[0])
    before = net.weights[0].copy()
    spec = OptimizerSpec(variant="slo", eta=0.1, speeds=(1.0, 1.0), epsilon=0.1)
    slo_step(net, grads, spec)
    moved = np.linalg.norm(net.weights[0] - before)
    assert moved == pytest.approx(0.1 * gnorm / (0.1 + gnorm), rel=1e-12)
    assert moved < 0.1


def test_slo_step_zero_gradient_layer_stays_put():
    net, ds = small_problem(seed=7)
    grads = compute_grads(net, ds)
    grads[1] = np.zeros_like(grads[1])
    before1 = net.weights[1].copy()
    spec = OptimizerSpec(variant="slo", eta=0.1, speeds=(1.0, 1.0), epsilon=0.0)
    slo_step(net, grads, spec)
    npt.assert_array_equal(net.weights[1], before1)


def test_slo_step_guards():
    net, ds = small_problem()
    grads = compute_grads(net, ds)
    with pytest.raises(ValueError):
        slo_step(net, grads, OptimizerSpec(variant="gd", eta=0.1))
    with pytest.raises(ValueError):
        slo_step(net, grads,
                 OptimizerSpec(variant="slo", eta=0.1, speeds=(1.0, 1.0, 1.0)))


def test_adaptive_slo_targets_weakest_layer():
    """Alignment (0.9, 0.2, 0.8) puts the whole budget s on layer 1 and
    1/s on the others."""
    net = init_mlp(MlpConfig(widths=(5, 8, 8, 1), activation="relu",
                             init_scales=(1.0, 1.0, 1.0), seed=9))
    rng = linalg.make_rng(10)
    grads = [rng.standard_normal(w.shape) for w in net.weights]
    before = [w.copy() for w in net.weights]
    spec = OptimizerSpec(variant="adaptive_slo", eta=0.1, epsilon=0.0, s=20.0)
    adaptive_slo_step(net, grads, spec, [0.9, 0.2, 0.8])
    moved = [np.linalg.norm(w - w0) for w, w0 in zip(net.weights, before)]
    assert moved[1] == pytest.approx(0.1 * 20.0, rel=1e-12)
    assert moved[0] == pytest.approx(0.1 / 20.0, rel=1e-12)
    assert moved[2] == pytest.approx(0.1 / 20.0, rel=1e-12)


def test_adaptive_slo_tie_goes_to_first_layer():
    net = init_mlp(MlpConfig(widths=(5, 8, 1), activation="relu",
                             init_scales=(1.0, 1.0), seed=11))
    grads = [np.ones_like(w) for w in net.weights]
    before = [w.copy() for w in net.weights]
    spec = OptimizerSpec(variant="adaptive_slo", eta=0.1, epsilon=0.0, s=4.0)
    adaptive_slo_step(net, grads, spec, [0.5, 0.5])
    moved = [np.linalg.norm(w - w0) for w, w0 in zip(net.weights, before)]
    assert moved[0] == pytest.approx(0.1 * 4.0, rel=1e-12)
    assert moved[1] == pytest.approx(0.1 / 4.0, rel=1e-12)


def test_adaptive_slo_guards():
    net, ds = small_problem()
    grads = compute_grads(net, ds)
    spec = OptimizerSpec(variant="adaptive_slo", eta=0.1)
    with pytest.raises(ValueError):
        adaptive_slo_step(net, grads, spec, [0.5])  # wrong length
    with pytest.raises(ValueError):
        adaptive_slo_step(net, grads, OptimizerSpec(variant="gd", eta=0.1), [0.5, 0.5])


# --------------------------------------------------------------- train log

def make_log():
    log = TrainLog()
    for step, tl, te in ((0, 4.0, 8.0), (5, 2.0, 4.0), (10, 1.0, 2.0)):
        log.snapshots.append(
            optim.NfaSnapshot(step=step, layer=0, uc_nfa=0.5, c_nfa=None,
                              dc_nfa=None, dc_ratio=None, ptk_c_nfa=None,
                              c_uc_ratio=0.0, train_loss=tl, test_loss=te))
    return log


def test_trainlog_normalized_losses():
    rows = make_log().serialized_rows()
    norm_train = [float(r[-2]) for r in rows]
    norm_test = [float(r[-1]) for r in rows]
    npt.assert_allclose(norm_train, [1.0, 0.5, 0.25])
    npt.assert_allclose(norm_test, [1.0, 0.5, 0.25])


def test_trainlog_normalized_losses_blank_when_unavailable():
    log = TrainLog()
    log.snapshots.append(
        optim.NfaSnapshot(step=0, layer=0, uc_nfa=None, c_nfa=None,
                          dc_nfa=None, dc_ratio=None, ptk_c_nfa=None,
                          c_uc_ratio=None, train_loss=0.0, test_loss=None))
    row = log.serialized_rows()[0]
    assert row[-2] == "" and row[-1] == ""


def test_trainlog_csv_round_trip(tmp_path):
    log = make_log()
    p = tmp_path / "log.csv"
    log.to_csv(p)
    back = TrainLog.from_csv(p)
    assert back.snapshots == log.snapshots
    assert back.measured_steps() == [0, 5, 10]
    assert back.final_snapshot(0).step == 10
    with pytest.raises(ValueError):
        back.final_snapshot(3)


def test_trainlog_from_csv_rejects_foreign_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        TrainLog.from_csv(p)


# ------------------------------------------------------------------- train

def test_train_measures_expected_steps():
    net, ds = small_problem(seed=20)
    spec = OptimizerSpec(variant="gd", eta=0.05)
    log = train(net, ds, None, spec, steps=7, measure_every=3)
    assert log.measured_steps() == [0, 3, 6, 7]
    # one row per layer per measured step
    assert len(log.snapshots) == 4 * net.n_weight_layers


def test_train_zero_steps_measures_initialization_only():
    net, ds = small_problem(seed=21)
    spec = OptimizerSpec(variant="gd", eta=0.05)
    log = train(net, ds, None, spec, steps=0, measure_every=5)
    assert log.measured_steps() == [0]
    row = log.layer_rows(0)[0]
    assert row.c_nfa is None  # centered metrics undefined at init
    assert row.c_uc_ratio == pytest.approx(0.0, abs=1e-15)


def test_train_deterministic_csv(tmp_path):
    spec = OptimizerSpec(variant="gd", eta=0.05)
    paths = []
    for tag in ("a", "b"):
        net, ds = small_problem(seed=22)
        log = train(net, ds, None, spec, steps=10, measure_every=5)
        p = tmp_path / f"{tag}.csv"
        log.to_csv(p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_train_readout_scale_touches_only_last_layer():
    net1, ds = small_problem(seed=23)
    net2 = net1.copy()
    train(net1, ds, None, OptimizerSpec(variant="gd", eta=1e-12),
          steps=0, measure_every=1)
    train(net2, ds, None, OptimizerSpec(variant="gd", eta=1e-12),
          steps=0, measure_every=1, readout_scale=0.01)
    npt.assert_array_equal(net1.weights[0], net2.weights[0])
    npt.assert_allclose(net2.weights[-1], net1.weights[-1] * 0.01, atol=1e-18)
    with pytest.raises(ValueError):
        net3, ds3 = small_problem(seed=23)
        train(net3, ds3, None, OptimizerSpec(variant="gd", eta=0.1),
              steps=0, measure_every=1, readout_scale=0.0)


def test_train_records_test_loss():
    net, ds = small_problem(seed=24)
    test_ds = Dataset(x=ds.x[:8], y=ds.y[:8], meta={})
    spec = OptimizerSpec(variant="gd", eta=0.05)
    log = train(net, ds, test_ds, spec, steps=2, measure_every=1)
    assert all(s.test_loss is not None for s in log.snapshots)


def test_train_measure_layers_filter():
    net, ds = small_problem(seed=25)
    spec = OptimizerSpec(variant="gd", eta=0.05)
    log = train(net, ds, None, spec, steps=2, measure_every=1,
                measure_layers=[0])
    assert {s.layer for s in log.snapshots} == {0}


def test_train_divergence_carries_partial_log():
    net, ds = small_problem(seed=26)
    spec = OptimizerSpec(variant="gd", eta=1e9)  # deliberately explosive
    with pytest.raises(DivergenceError) as err:
        train(net, ds, None, spec, steps=200, measure_every=10)
    assert err.value.last_good_step >= 0
    assert err.value.log.measured_steps()[0] == 0


def test_train_slo_and_adaptive_run():
    net, ds = small_problem(seed=27)
    spec = OptimizerSpec(variant="slo", eta=0.01, speeds=(1.0, 1.0), epsilon=0.1)
    log = train(net, ds, None, spec, steps=5, measure_every=5)
    assert log.measured_steps() == [0, 5]

    net2, ds2 = small_problem(seed=28)
    spec2 = OptimizerSpec(variant="adaptive_slo", eta=0.01, epsilon=0.01, s=20.0)
    log2 = train(net2, ds2, None, spec2, steps=5, measure_every=5)
    assert log2.measured_steps() == [0, 5]


def test_train_validates_arguments():
    net, ds = small_problem(seed=29)
    spec = OptimizerSpec(variant="gd", eta=0.05)
    with pytest.raises(ValueError):
        train(net, ds, None, spec, steps=-1, measure_every=1)
    with pytest.raises(ValueError):
        train(net, ds, None, spec, steps=1, measure_every=0)
    with pytest.raises(ValueError):
        train(net, ds, None,
              OptimizerSpec(variant="slo", eta=0.05, speeds=(1.0, 1.0, 1.0)),
              steps=1, measure_every=1)
