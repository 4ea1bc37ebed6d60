import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdo.algorithms import AlgorithmConfig, init_states, run_rounds
from spdo.metrics import (
    CSV_FIELDS,
    RoundTelemetry,
    averaging_weights,
    collect,
    read_csv,
    rounds_to_tolerance,
    to_csv,
    weighted_average,
)
from spdo.problems import make_quadratic_ensemble
from spdo.topology import build_graph, metropolis_weights


@pytest.fixture(scope="module")
def objs():
    return make_quadratic_ensemble(4, 6, 0.5, 5.0, 1.0, seed=0)


def tel(r, g, subopt=None):
    return RoundTelemetry(round=r, comm=2 * r, grads=r + 1, grad_norm=g, subopt=subopt,
                          consensus_x=0.0, consensus_v=None, tracking_err=0.0, inner_iters=0)


@pytest.mark.parametrize("kind", ["pdo", "spdo", "acc_spdo"])
def test_optimum_telemetry(objs, kind):
    t = collect(init_states(objs, objs.x_star, kind, lam=1.0), objs, kind)
    assert t.grad_norm <= 1e-10
    assert abs(t.subopt) <= 1e-12
    assert t.consensus_x == 0.0
    assert t.tracking_err <= 1e-20


def test_gradient_tracking_error_measures_g(objs):
    s = init_states(objs, objs.x_star, "gradient_tracking")
    t = collect(s.replace(g=np.zeros_like(s.g)), objs, "gradient_tracking")
    assert t.tracking_err <= 1e-20
    lg = objs.local_grads_at(objs.x_star)
    assert collect(s, objs, "gradient_tracking").tracking_err == pytest.approx(np.mean(np.sum(lg**2, axis=1)))


def test_round_zero_has_no_disagreement(objs):
    t = collect(init_states(objs, np.ones(6), "spdo"), objs, "spdo")
    assert t.consensus_x == 0.0 and t.consensus_v == 0.0 and t.tracking_err == 0.0


def test_consensus_by_hand(objs):
    s = init_states(objs, np.zeros(6), "pdo")
    X = np.zeros((4, 6))
    X[:2, 0] = [0.0, 2.0]
    X[2:, 0] = [0.0, 2.0]
    t = collect(s.replace(x=X), objs, "pdo")
    assert t.consensus_x == pytest.approx(1.0)


def test_gradient_tracking_has_no_v(objs):
    t = collect(init_states(objs, np.ones(6), "gradient_tracking"), objs, "gradient_tracking")
    assert t.consensus_v is None


def test_subopt_missing_without_optimum(objs):
    bare = make_quadratic_ensemble(4, 6, 0.5, 5.0, 1.0, seed=0)
    bare.x_star, bare.f_star = None, None
    assert collect(init_states(bare, np.ones(6), "spdo"), bare, "spdo").subopt is None


def test_strong_convexity_links_metrics(objs):
    g, mix = build_graph("ring", 4), None
    mix = metropolis_weights(g)
    for s in run_rounds(objs, mix, AlgorithmConfig("spdo", lam=20.0, M=5, inner="agd"), np.zeros(6), 30):
        t = collect(s, objs, "spdo")
        assert t.subopt <= t.grad_norm**2 / (2 * objs.mu) + 1e-9
        assert t.grad_norm >= 0 and t.consensus_x >= 0 and t.tracking_err >= 0


def test_rounds_to_tolerance_examples():
    assert rounds_to_tolerance([tel(0, 1e-9), tel(1, 1e-10)], "grad_norm", 1e-6) == 0
    rec = [tel(r, 10.0 * 0.5**r) for r in range(40)]
    first = next(r for r in range(40) if 10.0 * 0.5**r <= 1e-4)
    assert first == 17
    assert rounds_to_tolerance(rec, "grad_norm", 1e-4) == 17
    assert rounds_to_tolerance([tel(r, 1.0) for r in range(5)], "grad_norm", 1e-3) is None
    assert rounds_to_tolerance([tel(0, 1.0, None), tel(1, 1.0, 1e-9)], "subopt", 1e-6) == 1
    with pytest.raises(ValueError):
        rounds_to_tolerance(rec, "consensus_x", 1e-3)
    with pytest.raises(ValueError):
        rounds_to_tolerance(rec, "grad_norm", 0.0)


@given(mu=st.floats(0.0, 10.0), delta=st.floats(1e-3, 10.0), rounds=st.integers(1, 50),
       factor=st.sampled_from([4.0, 20.0]))
def test_averaging_weights(mu, delta, rounds, factor):
    w = averaging_weights(mu, delta, rounds, factor)
    assert w[0] == 1.0
    np.testing.assert_allclose(w, (1 + mu / (factor * delta)) ** np.arange(rounds), rtol=1e-12)
    assert weighted_average(np.full(rounds, 3.0), mu, delta, factor) == pytest.approx(3.0)


def test_csv_schema_and_roundtrip(tmp_path):
    rec = [tel(0, 1.0 / 3.0), tel(1, math.pi, subopt=2.0 / 7.0)]
    text = to_csv(rec, tmp_path / "t.csv")
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_FIELDS)
    assert lines[1].split(",")[3] == "0.33333333333333331"
    assert lines[1].split(",")[4] == ""
    assert lines[1].split(",")[6] == ""
    cols = read_csv(tmp_path / "t.csv")
    assert cols["grad_norm"][1] == math.pi
    assert math.isnan(cols["subopt"][0]) and cols["subopt"][1] == 2.0 / 7.0


def test_csv_per_node_columns(objs):
    t = collect(init_states(objs, np.zeros(6), "spdo"), objs, "spdo")
    text = to_csv([t], per_node=True)
    header = text.splitlines()[0].split(",")
    assert header[-4:] == [f"grads_node{i}" for i in range(4)]
    assert text.splitlines()[1].endswith("1,1,1,1")
