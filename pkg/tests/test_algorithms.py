import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdo.algorithms import (
    AccSchedule,
    AlgorithmConfig,
    acc_spdo_round,
    advance_schedule,
    init_states,
    pdo_round,
    run_rounds,
    spdo_round,
    step,
)
from spdo.metrics import collect
from spdo.problems import ObjectiveSet, QuadraticLocal, make_quadratic_ensemble
from spdo.subsolvers import DivergenceError, StopRule
from spdo.topology import build_graph, metropolis_weights

EXACT = StopRule("exact", tol=1e-13)


def scalar_set(cs, H=1.0, mu=0.0):
    return ObjectiveSet([QuadraticLocal(np.array([[H]]), np.array([H * c])) for c in cs],
                        mu=mu, big_l=max(H, 1e-12), delta=0.0)


def mixing(kind, n):
    g = build_graph(kind, n)
    return g, metropolis_weights(g)


@pytest.fixture(scope="module")
def ensemble():
    return make_quadratic_ensemble(6, 5, 0.5, 5.0, 0.8, seed=4)


# ------------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ValueError):
        AlgorithmConfig("sonata")
    with pytest.raises(ValueError):
        AlgorithmConfig("spdo", M=0)
    with pytest.raises(ValueError):
        AlgorithmConfig("pdo", lam=0.0)
    with pytest.raises(ValueError):
        AlgorithmConfig("spdo", gossip="lazy")
    with pytest.raises(ValueError):
        AlgorithmConfig("spdo", inner="newton")
    AlgorithmConfig("gradient_tracking", lam=0.0)


# ----------------------------------------------------------------- schedule


def test_schedule_first_steps():
    s1, a1 = advance_schedule(AccSchedule(lam=1.0))
    assert a1 == pytest.approx(1.0)
    assert (s1.A, s1.B, s1.r) == (pytest.approx(1.0), 1.0, 1)
    _, a2 = advance_schedule(AccSchedule(lam=1.0, A=1.0, B=1.0))
    assert a2 == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-15)
    delta = 0.03
    _, a = advance_schedule(AccSchedule(lam=208 * delta))
    assert a == pytest.approx(1 / (208 * delta), rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(1e-3, 1e3), ratio=st.floats(0.0, 4.0))
def test_schedule_invariants(lam, ratio):
    mu = ratio * lam
    s = AccSchedule(lam=lam, mu=mu)
    for r in range(1, 60):
        prev = s
        s, a = advance_schedule(s)
        assert a > 0
        assert lam * a * a == pytest.approx((prev.A + a) * prev.B, rel=1e-12)
        assert s.B == pytest.approx(1 + mu * s.A, rel=1e-12)
        if mu == 0:
            assert r * r / 4 <= lam * s.A * (1 + 1e-12) and lam * s.A <= r * r * (1 + 1e-12)


# --------------------------------------------------------------------- init


def test_init_tracking_terms():
    st0 = init_states(scalar_set([-2.0, -4.0]), np.zeros(1), "spdo")
    # grad f_1(0) = 2, grad f_2(0) = 4, so grad f = 3
    np.testing.assert_allclose(st0.h[:, 0], [1.0, -1.0])
    assert st0.h.sum() == 0.0


def test_init_homogeneous_and_charges(ensemble):
    homog = scalar_set([1.0, 1.0, 1.0])
    assert np.all(init_states(homog, np.zeros(1), "pdo").h == 0)
    s = init_states(ensemble, np.ones(5), "acc_spdo", diameter=3, lam=2.0)
    assert s.comm == 3 and np.all(s.grads == 1)
    assert s.sched == AccSchedule(2.0, ensemble.mu)
    np.testing.assert_allclose(s.h.sum(axis=0), 0, atol=1e-12)
    gt = init_states(ensemble, np.ones(5), "gradient_tracking", diameter=3)
    assert gt.comm == 0
    np.testing.assert_allclose(gt.g, ensemble.local_grads(gt.x))


# ------------------------------------------------------------ scalar oracles


def test_pdo_single_node_prox_point():
    objs = scalar_set([0.0])
    _, mix = mixing("ring", 1)
    s = init_states(objs, np.ones(1), "pdo")
    s = pdo_round(s, mix, AlgorithmConfig("pdo", lam=1.0, inner="agd", stop=EXACT), objs, 0)
    assert s.x[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_spdo_single_node():
    objs = scalar_set([0.0])
    _, mix = mixing("ring", 1)
    s = init_states(objs, np.ones(1), "spdo")
    s = spdo_round(s, mix, AlgorithmConfig("spdo", lam=1.0, inner="agd", stop=EXACT), objs, 0)
    assert s.x[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert s.v[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_acc_single_node_first_round():
    objs = scalar_set([0.0])
    _, mix = mixing("ring", 1)
    s = init_states(objs, np.ones(1), "acc_spdo", lam=1.0)
    s1, sched = acc_spdo_round(s, mix, s.sched, AlgorithmConfig("acc_spdo", lam=1.0, inner="agd", stop=EXACT),
                               objs, 0)
    assert s1.y[0, 0] == 1.0  # A_0 = 0 so y = v
    assert s1.x[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert s1.v[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert (sched.A, sched.B) == (pytest.approx(1.0), 1.0)


def test_acc_first_round_extrapolates_to_v(ensemble):
    _, mix = mixing("ring", 6)
    s = init_states(ensemble, np.zeros(5), "acc_spdo", lam=3.0)
    s = s.replace(v=s.v + np.arange(6)[:, None])
    s1, _ = acc_spdo_round(s, mix, s.sched, AlgorithmConfig("acc_spdo", lam=3.0, M=2, inner="agd"), ensemble, 0)
    assert np.array_equal(s1.y, s.v)


def test_gradient_tracking_single_node_is_gd():
    objs = scalar_set([3.0], H=2.0)
    _, mix = mixing("ring", 1)
    s = init_states(objs, np.zeros(1), "gradient_tracking")
    s = step(s, mix, AlgorithmConfig("gradient_tracking", eta_gt=0.1), objs)
    assert s.x[0, 0] == pytest.approx(0 - 0.1 * (2 * 0 - 6))


def test_gradient_tracking_two_nodes_by_hand():
    objs = scalar_set([0.0, 2.0])
    _, mix = mixing("complete", 2)
    s = init_states(objs, np.zeros(1), "gradient_tracking")
    s = step(s, mix, AlgorithmConfig("gradient_tracking", eta_gt=0.5), objs)
    np.testing.assert_allclose(s.x[:, 0], [0.5, 0.5])
    np.testing.assert_allclose(s.g[:, 0], [-0.5, -0.5])
    assert s.comm == 2 and list(s.grads) == [2, 2]


def test_gradient_tracking_divergence():
    objs = scalar_set([1.0], H=10.0)
    _, mix = mixing("ring", 1)
    s = init_states(objs, np.zeros(1), "gradient_tracking")
    cfg = AlgorithmConfig("gradient_tracking", eta_gt=1.0)
    with pytest.raises(DivergenceError):
        for _ in range(100):
            s = step(s, mix, cfg, objs)


# ------------------------------------------------------------ fixed points


@pytest.mark.parametrize("kind,gossip", [("pdo", "plain"), ("spdo", "plain"), ("acc_spdo", "fast")])
def test_optimum_is_fixed_point(ensemble, kind, gossip):
    g, mix = mixing("ring", 6)
    cfg = AlgorithmConfig(kind, lam=4.0, M=3, gossip=gossip, inner="agd", stop=StopRule(kind if kind != "pdo"
                                                                                          else "inexact_pdo"))
    s = init_states(ensemble, ensemble.x_star, kind, lam=4.0)
    for _ in range(3):
        s2 = step(s, mix, cfg, ensemble)
        for name in ("x", "h", "v"):
            assert np.max(np.abs(getattr(s2, name) - getattr(s, name))) <= 1e-10
        s = s2


def test_gradient_tracking_at_optimum_keeps_mean(ensemble):
    _, mix = mixing("ring", 6)
    s = init_states(ensemble, ensemble.x_star, "gradient_tracking")
    s = step(s, mix, AlgorithmConfig("gradient_tracking", eta_gt=0.05), ensemble)
    np.testing.assert_allclose(s.x.mean(axis=0), ensemble.x_star, atol=1e-12)


# --------------------------------------------------------------- invariants


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), kind=st.sampled_from(["pdo", "spdo", "acc_spdo"]),
       M=st.integers(1, 4), lam=st.floats(0.5, 20.0))
def test_tracking_sum_is_conserved(seed, kind, M, lam):
    objs = make_quadratic_ensemble(5, 4, 0.2, 4.0, 0.7, seed=seed)
    _, mix = mixing("ring", 5)
    cfg = AlgorithmConfig(kind, lam=lam, M=M, gossip="fast" if kind == "acc_spdo" else "plain", inner="agd")
    x0 = np.random.default_rng(seed).standard_normal(4)
    for s in run_rounds(objs, mix, cfg, x0, 25):
        assert np.max(np.abs(s.h.sum(axis=0))) <= 1e-10 * 5


def test_gradient_tracking_sum_invariant(ensemble):
    _, mix = mixing("ring", 6)
    for s in run_rounds(ensemble, mix, AlgorithmConfig("gradient_tracking", eta_gt=0.1, M=2), np.ones(5), 50):
        np.testing.assert_allclose(s.g.sum(axis=0), ensemble.local_grads(s.x).sum(axis=0), atol=1e-10 * 6)


def test_exact_solves_make_spdo_equal_pdo(ensemble):
    _, mix = mixing("ring", 6)
    kw = dict(lam=3.0, M=3, inner="agd", stop=StopRule("exact", tol=1e-12), max_inner=100_000)
    sp = run_rounds(ensemble, mix, AlgorithmConfig("spdo", **kw), np.zeros(5), 20)
    pd = run_rounds(ensemble, mix, AlgorithmConfig("pdo", **kw), np.zeros(5), 20)
    assert max(np.max(np.abs(a.v - b.x)) for a, b in zip(sp, pd)) <= 1e-8


@pytest.mark.parametrize("kind,lam_factor,stop", [("pdo", 4, "inexact_pdo"), ("spdo", 20, "spdo")])
def test_suboptimality_nonincreasing(kind, lam_factor, stop):
    objs = make_quadratic_ensemble(6, 8, 1.0, 10.0, 0.5, seed=0)
    _, mix = mixing("ring", 6)
    c = 6 if kind == "pdo" else 5
    M = math.ceil(math.log(c * 10 / 0.5) / (1 - mix.rho))
    cfg = AlgorithmConfig(kind, lam=lam_factor * 0.5, M=M, inner="agd", stop=StopRule(stop))
    sub = [collect(s, objs, kind).subopt for s in run_rounds(objs, mix, cfg, np.zeros(8), 60)]
    assert all(b <= a + 1e-12 for a, b in zip(sub[5:], sub[6:]))


@pytest.mark.parametrize("kind", ["gradient_tracking", "pdo", "spdo", "acc_spdo"])
def test_communication_schedule(ensemble, kind):
    g, mix = mixing("ring", 6)
    M = 3
    cfg = AlgorithmConfig(kind, lam=2.0, M=M, inner="agd", eta_gt=0.05)
    states = run_rounds(ensemble, mix, cfg, np.zeros(5), 6, diameter=g.diameter())
    comm = [s.comm for s in states]
    base = 0 if kind == "gradient_tracking" else g.diameter()
    assert comm[0] == base
    for r in range(1, len(comm)):
        per = 3 * M if kind == "acc_spdo" and r >= 2 else 2 * M
        assert comm[r] - comm[r - 1] == per
    grads = np.array([s.grads for s in states])
    assert np.all(np.diff(grads, axis=0) >= 1)


def test_rounds_are_pure(ensemble):
    _, mix = mixing("ring", 6)
    s = init_states(ensemble, np.zeros(5), "spdo")
    snapshot = {k: np.copy(getattr(s, k)) for k in ("x", "h", "v")}
    step(s, mix, AlgorithmConfig("spdo", lam=2.0, M=2, inner="agd"), ensemble)
    for k, v in snapshot.items():
        assert np.array_equal(getattr(s, k), v)


def test_runs_are_bitwise_reproducible(ensemble):
    _, mix = mixing("ring", 6)
    cfg = AlgorithmConfig("acc_spdo", lam=5.0, M=4, gossip="fast", inner="gd", eta=0.1)
    a = run_rounds(ensemble, mix, cfg, np.ones(5), 15)[-1]
    b = run_rounds(ensemble, mix, cfg, np.ones(5), 15)[-1]
    assert np.array_equal(a.x, b.x) and np.array_equal(a.v, b.v) and np.array_equal(a.h, b.h)


def test_callback_sees_every_state(ensemble):
    _, mix = mixing("ring", 6)
    seen = []
    out = run_rounds(ensemble, mix, AlgorithmConfig("spdo", lam=2.0), np.zeros(5), 4, callback=seen.append)
    assert len(seen) == len(out) == 5
    assert [s.r for s in seen] == list(range(5))
