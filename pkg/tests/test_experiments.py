from __future__ import annotations

import json
import math

import numpy as np
import pytest

import oracles
from mixlab.forms import ex_form, ip_form, rw_form, spectral_gap
from mixlab.graphs import CapExceeded, complete_graph, connected_graphs, cycle_graph, hypercube, path_graph, star_graph
from mixlab.experiments import (
    ExperimentRecord,
    Uniformized,
    comparison_pipeline,
    exact_mixing_time,
    ip_distribution,
    lsi_lower_bound,
    lsi_ratio,
    t_cyc_estimate,
    tv_lower_bound,
    wilson_statistic,
)


def test_k2_mixing_time_closed_form():
    # TV(t) = exp(-2t)/2 on S(2)
    expected = (1 - math.log(2)) / 2
    assert abs(exact_mixing_time(complete_graph(2)) - expected) <= 1e-4


def test_ip_distribution_matches_matrix_exponential():
    for G in (path_graph(3), star_graph(4), cycle_graph(4)):
        _, L = oracles.ip_generator_graph(G)
        for t in (0.0, 0.3, 1.7):
            assert np.allclose(ip_distribution(G, t), oracles.expm_action(L, t), atol=1e-11)


def test_uniformized_tv_nonincreasing():
    U = Uniformized(ip_form(path_graph(4)))
    tvs = [U.tv_to_uniform(t) for t in np.linspace(0, 5, 26)]
    assert all(b <= a + 1e-12 for a, b in zip(tvs, tvs[1:]))
    with pytest.raises(ValueError):
        U.distribution(-1.0)


def test_mixing_time_monotone_in_epsilon():
    G = path_graph(4)
    times = [exact_mixing_time(G, eps) for eps in (0.5, 0.25, 0.1, 0.01)]
    assert times == sorted(times) and times[0] < times[-1]


def test_hypercube_mixing_times_increase():
    times = [exact_mixing_time(hypercube(n)) for n in (1, 2, 3)]
    assert times == sorted(times)
    assert abs(times[0] - 0.15343) < 1e-4


@pytest.mark.parametrize("G", [complete_graph(3), complete_graph(4), star_graph(4)])
def test_mixing_time_brackets_the_threshold(G):
    eps, tol = math.exp(-1), 1e-4
    t = exact_mixing_time(G, eps, tol)
    _, L = oracles.ip_generator_graph(G)

    def tv(s):
        return 0.5 * np.abs(oracles.expm_action(L, s) - 1 / L.shape[0]).sum()

    assert tv(t) <= eps + 1e-12 and tv(t - tol) > eps


def test_mixing_time_validation():
    with pytest.raises(CapExceeded):
        exact_mixing_time(hypercube(3), cap=1000)
    with pytest.raises(ValueError):
        exact_mixing_time(path_graph(3), epsilon=1.5)


def test_wilson_statistic_on_products_uses_factor_vector():
    G = hypercube(3)
    W = wilson_statistic(G)
    phi = W.phi
    # an eigenvector of the walk generator on Q3 with eigenvalue 2
    lap = G.laplacian().toarray()
    assert np.allclose(lap @ phi, 2 * phi)
    assert math.isclose(W(np.arange(8)), float(phi @ phi))


def test_tv_lower_bound_at_time_zero_is_large():
    out = tv_lower_bound(hypercube(3), 0.0, replicas=5000, seed=1)
    assert out["lower_bound"] > 0.5


def test_tv_lower_bound_vanishes_after_mixing():
    out = tv_lower_bound(cycle_graph(4), 20.0, replicas=5000, seed=1)
    assert out["lower_bound"] == 0.0


def test_tv_lower_bound_below_exact_tv():
    G = path_graph(4)
    U = Uniformized(ip_form(G))
    for t in (0.2, 0.6):
        out = tv_lower_bound(G, t, replicas=8000, seed=3)
        assert out["lower_bound"] <= U.tv_to_uniform(t)


def test_tv_lower_bound_rejects_tiny_samples():
    with pytest.raises(ValueError):
        tv_lower_bound(cycle_graph(4), 1.0, replicas=50)


def test_t_cyc_grid_refinement_never_later():
    G = hypercube(5)
    coarse = np.geomspace(0.05, 8, 12)
    fine = np.sort(np.r_[coarse, np.geomspace(0.06, 7, 17)])
    a = t_cyc_estimate(G, coarse, replicas=100, seed=4)
    b = t_cyc_estimate(G, fine, replicas=100, seed=4)
    assert b.t_cyc <= a.t_cyc


def test_t_cyc_table_and_censoring():
    res = t_cyc_estimate(hypercube(4), [1e-3, 2e-3], replicas=50, seed=1)
    assert res.censored and res.t_cyc == math.inf and res.success == [0, 0]
    res = t_cyc_estimate(hypercube(4), replicas=50, seed=1)
    assert not res.censored
    assert res.t_lower <= res.t_cyc <= res.t_upper
    for t, k, r, p, lo, hi in res.rows():
        assert lo <= p <= hi and r == 50
    with pytest.raises(ValueError):
        t_cyc_estimate(hypercube(4), [1.0, 0.5])


def test_lsi_ratio_edge_cases():
    Q = rw_form(cycle_graph(5))
    assert lsi_ratio(Q, np.ones(5)) == 0.0
    assert lsi_ratio(Q, np.zeros(5)) == 0.0


def test_lsi_two_point_space():
    Q = rw_form(complete_graph(2))
    res = lsi_lower_bound(Q, trials=10, seed=0)
    # two-point inequality: Ent(g^2) <= ((a - b)^2) / 2 = E(g), attained in the limit
    assert abs(res.lower_bound - 1.0) < 1e-3


@pytest.mark.parametrize("G,k", [(cycle_graph(4), 2), (path_graph(4), 2), (star_graph(5), 2), (complete_graph(4), 1)])
def test_lsi_sandwich(G, k):
    res = lsi_lower_bound(ex_form(G, k), trials=8, seed=1, G=G, k=k)
    assert res.sandwich_lower <= res.sandwich_upper
    assert res.lower_bound <= res.sandwich_upper * (1 + 1e-9)
    assert res.lower_bound >= res.sandwich_lower
    assert "best" not in res.to_dict()


@pytest.mark.parametrize("n", [1, 2, 3])
def test_pipeline_hypercube_lower_bound(n):
    out = comparison_pipeline(n, 2, exact=n <= 2)
    assert math.isclose(out["lower"], 2**n / 2, rel_tol=1e-9)
    if out["chi"] is not None:
        assert out["consistent"]


@pytest.mark.parametrize("n,ell,G", [
    (2, 2, cycle_graph(4)),
    (1, 3, path_graph(3)),
    (1, 4, complete_graph(4)),
    (1, 4, star_graph(4)),
])
def test_pipeline_examples(n, ell, G):
    out = comparison_pipeline(n, ell, G)
    assert out["consistent"] and out["lower_ratio"] >= 1 - 1e-6 and out["upper_ratio"] >= 1


def test_pipeline_flags_hamming_reduction():
    assert not comparison_pipeline(2, 2, cycle_graph(4))["hamming_reduction_applied"]
    assert comparison_pipeline(1, 4, star_graph(4))["hamming_reduction_applied"]
    with pytest.raises(ValueError):
        comparison_pipeline(2, 3, cycle_graph(4))


def test_record_round_trip(tmp_path):
    rec = ExperimentRecord(
        "demo",
        {"graph": "cycle4", "t": 0.5},
        7,
        outputs={"value": 1.25, "arr": np.arange(3), "wall_time": 3.0},
        tables={"grid": (("t", "p"), [(0.1, 0.2), (0.3, 0.4)])},
        tolerances={"value": 1e-9},
        wall_time=1.5,
    )
    run = rec.save(run_dir=tmp_path / "run")
    record = json.loads((run / "record.json").read_text())
    assert "wall_time" not in json.dumps(record)
    assert json.loads((run / "timing.json").read_text())["wall_time"] == 1.5
    back = ExperimentRecord.load(run)
    assert back.record_dict() == rec.record_dict()
    assert back.config == rec.config
    assert back.tables["grid"][0] == ["t", "p"]


def test_record_default_directory(tmp_path):
    rec = ExperimentRecord("abc", {}, None)
    run = rec.save(root=tmp_path)
    assert run.parent == tmp_path and run.name.endswith("-abc")


def test_complete_graph_log_m_over_m_trend():
    # random transpositions at total rate C(m, 2) cut off at log(m) / (m - 1)
    ratios = [exact_mixing_time(complete_graph(m)) * m / math.log(m) for m in range(3, 8)]
    assert all(0.3 < r < 1.5 for r in ratios)
    assert abs(ratios[-1] - 1) < abs(ratios[0] - 1)


def test_tv_lower_bound_consistent_with_exact_mixing_time():
    G = hypercube(3)
    t = exact_mixing_time(G)
    out = tv_lower_bound(G, t, replicas=10_000, seed=2)
    assert out["lower_bound"] <= math.exp(-1)


def test_t_cyc_zero_at_time_zero():
    res = t_cyc_estimate(cycle_graph(6), [0.0, 0.5], replicas=30, seed=0)
    assert res.success[0] == 0


def test_t_cyc_on_large_clique_is_small():
    res = t_cyc_estimate(complete_graph(256), [0.01, 0.02, 0.05], replicas=200, seed=1)
    assert not res.censored and res.t_cyc <= 0.05


@pytest.mark.parametrize("m", [3, 4, 5])
def test_lsi_lower_bound_above_half_relaxation_on_catalog(m):
    for G in connected_graphs(m):
        trel = spectral_gap(rw_form(G)).trel
        for k in range(1, m):
            res = lsi_lower_bound(ex_form(G, k), trials=2, seed=0)
            assert res.lower_bound >= trel / 2 - 1e-9


def test_lsi_lee_yau_order_on_cycle():
    res = lsi_lower_bound(ex_form(cycle_graph(4), 2), trials=4, seed=0, G=cycle_graph(4), k=2)
    # the spectral upper bound on the mean-field constant sits within a constant of the Lee-Yau order
    assert 0.1 < res.rho_K_upper / res.lee_yau_order < 10


def test_pipeline_complete_graph_has_unit_chi():
    out = comparison_pipeline(1, 5, complete_graph(5))
    assert abs(out["chi"] - 1) < 1e-10 and out["consistent"]
