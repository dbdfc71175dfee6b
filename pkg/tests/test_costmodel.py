import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridsgd import costmodel
from hybridsgd.costmodel import compare, predict
from hybridsgd.dataio import gen_synthetic, parse_libsvm
from hybridsgd.parsolvers import fedavg, hybrid_sgd, par_sgd, par_sstep_sgd
from hybridsgd.seqsolvers import SolverConfig
from hybridsgd.simgrid import ProcessorGrid

BASE = {"n": 300, "c": 10, "m": 256}


def same_costs(a, b):
    return (a.F, a.T, a.M, a.W, a.L) == (b.F, b.T, b.M, b.W, b.L)


def test_sstep_table_example():
    pred = predict("sstep", {**BASE, "K": 512, "s": 4, "b": 16, "p": 8}, mode="table")
    assert pred.W == 196608
    assert pred.L == 128 * 3


def test_fedavg_table_example():
    pred = predict("fedavg", {**BASE, "K_tilde": 10, "tau": 4, "b": 16, "p": 8}, mode="table")
    assert (pred.W, pred.L) == (3000, 30)
    derived = predict("fedavg", {**BASE, "K_tilde": 10, "tau": 4, "b": 16, "p": 8})
    assert (derived.W, derived.L) == (3000, 60)
    assert "sqrt" in derived.rate_condition


def test_table_mode_row_col_reading():
    row = predict("sgd-row", {**BASE, "K": 10, "b": 16, "p": 4}, mode="table")
    col = predict("sgd-col", {**BASE, "K": 10, "b": 16, "p": 4}, mode="table")
    assert (row.W, col.W) == (160, 3000)
    d_row = predict("sgd-row", {**BASE, "K": 10, "b": 16, "p": 4})
    d_col = predict("sgd-col", {**BASE, "K": 10, "b": 16, "p": 4})
    assert (d_row.W, d_col.W) == (10 * 300, 10 * 16)


def test_missing_parameter_is_named():
    with pytest.raises(ValueError, match="tau"):
        predict("hybrid", {**BASE, "K_hat": 8, "s": 2, "b": 4, "p_r": 2, "p_c": 2})
    with pytest.raises(ValueError):
        predict("quantum", BASE)
    with pytest.raises(ValueError):
        predict("sstep", {**BASE, "K": 8, "s": 2, "b": 4, "p": 2}, mode="exact")


def test_params_from_dataset_flags_nonuniform():
    d = gen_synthetic(32, 20, 4)
    params = costmodel.params_from_dataset(d, K=8, b=4, p=2)
    assert params["c"] == 4 and params["uniform"]
    assert predict("sgd-col", params).notes == ()
    skew = parse_libsvm("+1 1:1\n-1 1:1 2:1 3:1\n")
    params = costmodel.params_from_dataset(skew, K=8, b=2, p=2)
    assert params["c"] == 2.0 and not params["uniform"]
    assert "assumption violated" in predict("sgd-col", params).notes[0]


def test_hockney_example_on_prediction():
    pred = predict("sgd-2d", {**BASE, "K": 1, "b": 16, "p_r": 2, "p_c": 2})
    assert pred.modeled_time(0, 0, 0) == 0
    assert pred.modeled_time(1.0, 0, 0) == pred.L


# Measured ledgers match the derived model exactly.

@pytest.fixture(scope="module")
def syn():
    return gen_synthetic(256, 300, 10, seed=1)


def test_compare_par_sgd(syn):
    run = par_sgd(syn, ProcessorGrid(2, 4), "grid2d", SolverConfig(b=16, K=100))
    report = compare(predict("sgd-2d", costmodel.params_from_dataset(
        syn, K=100, b=16, p_r=2, p_c=4)), run.ledger)
    assert report.ok, str(report)
    assert report["W"].ratio == 1.0 and report["W"].measured == 8300
    assert 0.5 <= report["F"].ratio <= 2


@pytest.mark.parametrize("layout,p_r,p_c,alg", [
    ("row1d", 4, 1, "sgd-row"), ("col1d", 1, 4, "sgd-col")])
def test_compare_1d(syn, layout, p_r, p_c, alg):
    run = par_sgd(syn, ProcessorGrid(p_r, p_c), layout, SolverConfig(b=16, K=50))
    params = costmodel.params_from_dataset(syn, K=50, b=16, p=p_r * p_c)
    assert compare(predict(alg, params), run.ledger).ok


def test_compare_fedavg(syn):
    run = fedavg(syn, 8, SolverConfig(b=16, K=40, tau=4))
    params = costmodel.params_from_dataset(syn, K_tilde=10, tau=4, b=16, p=8)
    assert compare(predict("fedavg", params), run.ledger).ok


def test_compare_sstep_parts(syn):
    run = par_sstep_sgd(syn, 4, SolverConfig(b=16, K=100, s=4))
    pred = predict("sstep", costmodel.params_from_dataset(syn, K=100, s=4, b=16, p=4))
    report = compare(pred, run.ledger)
    assert report.ok, str(report)
    assert report["W[sstep_comm.gram]"].measured == 25 * 6 * 256
    s, b = 4, 16
    assert report["W"].measured / report["W[sstep_comm.gram]"].measured <= \
        1 + s / (math.comb(s, 2) * b)


def test_compare_hybrid(syn):
    run = hybrid_sgd(syn, ProcessorGrid(2, 4), SolverConfig(b=16, K=64, s=4, tau=8))
    params = costmodel.params_from_dataset(syn, K_hat=64, s=4, tau=8, b=16, p_r=2, p_c=4)
    report = compare(predict("hybrid", params), run.ledger)
    assert report.ok, str(report)
    assert report["W[sstep_comm]"].measured == 16 * (6 * 64 + 32)
    assert report["W[fedavg_comm]"].measured == 8 * 75


def test_compare_flags_mismatch():
    pred = predict("fedavg", {**BASE, "K_tilde": 10, "tau": 4, "b": 16, "p": 8})
    from hybridsgd.simgrid import CostLedger
    led = CostLedger()
    led.record_comm("fedavg_comm", 2999, 60)
    report = compare(pred, led)
    assert not report.ok and not report["W"].ok and "FAIL" in str(report)


# Specialization identities.

params_2d = st.fixed_dictionaries({
    "K": st.integers(0, 5000), "b": st.integers(1, 256), "n": st.integers(1, 10 ** 5),
    "c": st.integers(1, 200), "m": st.integers(1, 10 ** 6)})


@given(params_2d, st.integers(1, 64))
@settings(max_examples=200, deadline=None)
def test_sgd_2d_specializes(p, q):
    assert same_costs(predict("sgd-2d", {**p, "p_r": q, "p_c": 1}),
                      predict("sgd-row", {**p, "p": q}))
    assert same_costs(predict("sgd-2d", {**p, "p_r": 1, "p_c": q}),
                      predict("sgd-col", {**p, "p": q}))


@given(params_2d, st.integers(1, 6).map(lambda e: 2 ** e // 2), st.integers(1, 64))
@settings(max_examples=200, deadline=None)
def test_hybrid_reduces_to_sstep(p, s, q):
    K = p["K"] - p["K"] % s
    base = {k: v for k, v in p.items() if k != "K"}
    h = predict("hybrid", {**base, "K_hat": K, "s": s, "tau": s, "p_r": 1, "p_c": q})
    ss = predict("sstep", {**base, "K": K, "s": s, "p": q})
    assert same_costs(h, ss)


@given(params_2d, st.integers(1, 64), st.integers(1, 50))
@settings(max_examples=200, deadline=None)
def test_hybrid_reduces_to_fedavg_comm(p, q, tau):
    rounds = p["K"] // tau + 1
    b = p["b"] * q
    base = {**p, "b": b}
    h = predict("hybrid", {**base, "K_hat": rounds * tau, "s": 1, "tau": tau,
                           "p_r": q, "p_c": 1})
    f = predict("fedavg", {**base, "K_tilde": rounds, "tau": tau, "p": q})
    assert (h.W, h.L) == (f.W, f.L)


@given(st.integers(1, 8).map(lambda e: 2 ** e), st.integers(0, 4).map(lambda e: 2 ** e))
def test_hybrid_bandwidth_monotone(p, s):
    base = {"K_hat": 1024, "s": s, "tau": 16, "b": 256, "n": 512, "c": 16, "m": 4096}
    cells = [predict("hybrid", {**base, "p_r": pr, "p_c": pc})
             for pr, pc in costmodel.factorizations(p)]
    sstep_words = [c.W_parts["sstep_comm"] for c in cells if c.params["p_c"] > 1]
    assert all(a >= b for a, b in zip(sstep_words, sstep_words[1:]))
    fed = [c.W_parts["fedavg_comm"] for c in cells if c.params["p_r"] > 1]
    # p_c grows as p_r shrinks, so fedavg words shrink along decreasing p_r
    assert all(a <= b for a, b in zip(fed, fed[1:])) or len(fed) < 2


# Sweeps.

SWEEP_BASE = {"K_hat": 2048, "b": 4, "tau": 512, "n": 512, "c": 16, "m": 4096}


def test_sweep_flops_only_ranking():
    cells = costmodel.hybrid_cells(16, [1, 2, 4], SWEEP_BASE)
    rows = costmodel.sweep(cells, 0, 0, 1.0, phi=4.0)
    work = {(r.s, r.p_r): r.modeled_time for r in rows}
    for alg, params in cells:
        pred = predict(alg, params)
        assert work[(params["s"], params["p_r"])] == pred.F + 4.0 * pred.T
    times = [r.modeled_time for r in rows]
    assert times == sorted(times)


def test_sweep_large_alpha_prefers_big_s():
    rows = costmodel.sweep(costmodel.hybrid_cells(16, [1, 2, 4, 8, 16, 32], SWEEP_BASE),
                           1.0, 1e-12, 1e-15)
    assert rows[0].s == 32


def test_sweep_pr1_column_matches_sstep():
    rows = costmodel.sweep(costmodel.hybrid_cells(16, [2, 4], SWEEP_BASE), 1e-6, 1e-9, 1e-12)
    for r in (r for r in rows if r.p_r == 1):
        ref = predict("sstep", {**SWEEP_BASE, "K": SWEEP_BASE["K_hat"], "s": r.s, "p": 16})
        assert (r.F, r.W, r.L) == (ref.F, ref.W, ref.L)


def test_sweep_csv_and_heatmap():
    rows = costmodel.sweep(costmodel.hybrid_cells(4, [1, 2], SWEEP_BASE), 1e-6, 1e-9, 1e-12)
    text = costmodel.sweep_csv(rows)
    assert text.splitlines()[0] == ",".join(costmodel.SWEEP_COLUMNS)
    assert len(text.splitlines()) == len(rows) + 1
    hm = costmodel.heatmap(rows)
    assert hm[(1, 1)] == 1.0  # baseline: s=1 with the most column ranks
    with pytest.raises(ValueError):
        costmodel.sweep(costmodel.hybrid_cells(4, [1], SWEEP_BASE), 0, 0, 1, baseline=(9, 9, 9))


def test_hybrid_cells_skip_invalid():
    cells = costmodel.hybrid_cells(16, [1, 3, 1024], {**SWEEP_BASE, "b": 4})
    assert all(c["p_r"] in (1, 2, 4) and c["s"] == 1 for _, c in cells)


def test_fedavg_vs_sgd_ranking_flips_with_alpha():
    sgd = predict("sgd-row", {**BASE, "K": 1000, "b": 64, "p": 16})
    fed = predict("fedavg", {**BASE, "K_tilde": 10, "tau": 100, "b": 64, "p": 16})
    cheap_net = (sgd.modeled_time(0, 0, 1e-9), fed.modeled_time(0, 0, 1e-9))
    slow_net = (sgd.modeled_time(1e-3, 0, 1e-9), fed.modeled_time(1e-3, 0, 1e-9))
    assert cheap_net[0] < cheap_net[1]
    assert slow_net[0] > slow_net[1]
