"""Acceptance criteria, one test each, at their stated tolerances."""

import math
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from hybridsgd import costmodel, logreg, seqsolvers
from hybridsgd.costmodel import compare, predict
from hybridsgd.dataio import FetchError, gen_synthetic, pad_rows, pad_to_multiple
from hybridsgd.parsolvers import fedavg, hybrid_sgd, par_sgd, par_sstep_sgd
from hybridsgd.seqsolvers import SolverConfig
from hybridsgd.simgrid import HockneyParams, ProcessorGrid

LADDER = SolverConfig(b=8, eta=0.5, K=200)
HOCKNEY = HockneyParams(1e-6, 1e-9, 1e-12)


def maxdiff(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def unavailable(data) -> str | None:
    return f"w1a unavailable ({data})" if isinstance(data, FetchError) else None


# 1 -------------------------------------------------------------------------

def sstep_equivalence(d, s_values, b=16, K=512):
    """Worst |x_sstep - x_sgd| over s and the slowest s-step runtime."""
    d = pad_rows(d, max(s_values), b)
    cfg = SolverConfig(b=b, eta=1.0 / b, K=K)
    x_ref, _ = seqsolvers.sgd(d, cfg)
    worst, slowest = 0.0, 0.0
    for s in s_values:
        t0 = time.perf_counter()
        x, _ = seqsolvers.sstep_sgd(d, SolverConfig(b=b, eta=1.0 / b, K=K, s=s))
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, maxdiff(x, x_ref))
    return worst, slowest


def test_criterion_1_sstep_equivalence(criterion, breast_cancer, w1a):
    parts, ok = [], True
    err, secs = sstep_equivalence(breast_cancer, [2, 16])
    ok &= err <= 1e-10 and secs < 10
    parts.append(f"breast-cancer max|dx|={err:.2e} in {secs:.2f}s")
    reason = unavailable(w1a)
    if reason:
        ok = False
        parts.append(reason)
    else:
        err, secs = sstep_equivalence(w1a, [2, 4, 16])
        ok &= err <= 1e-10 and secs < 10
        parts.append(f"w1a max|dx|={err:.2e} in {secs:.2f}s")
    criterion(1, "s-step equivalence", ok, "; ".join(parts))


# 2 -------------------------------------------------------------------------

def test_criterion_2_gradient_oracle(criterion, breast_cancer):
    rng = np.random.default_rng(2024)
    Z = logreg.scale_rows_by_labels(breast_cancer)
    batch = logreg.BatchView.from_rows(Z, np.arange(breast_cancer.m))
    worst = 0.0
    for _ in range(10):
        x = rng.uniform(-1, 1, breast_cancer.n)
        d = logreg.descent_direction(batch, logreg.compute_u(batch, x), batch.b)
        fd = logreg.grad_fd_oracle(breast_cancer, x, h=1e-6)
        worst = max(worst, np.linalg.norm(-d - fd) / np.linalg.norm(fd))
    criterion(2, "gradient oracle", worst <= 1e-5, f"max relative L2 error {worst:.2e}")


# 3 -------------------------------------------------------------------------

def ladder_runs(bc, mode="reference"):
    """The four degeneracy pairs as (name, parallel run, reference iterate)."""
    ss = SolverConfig(b=8, eta=0.5, K=200, s=4, tau=4)
    fa = SolverConfig(b=8, eta=0.5, K=200, s=4, tau=20)
    x_sgd, _ = seqsolvers.sgd(bc, LADDER)
    return [
        ("hybrid(p_r=1) vs sstep", hybrid_sgd(bc, ProcessorGrid(1, 4), ss, HOCKNEY, mode),
         seqsolvers.sstep_sgd(bc, ss)[0]),
        ("hybrid(p_c=1) vs fedavg", hybrid_sgd(bc, ProcessorGrid(4, 1), fa, HOCKNEY, mode),
         fedavg(bc, 4, fa, hockney=HOCKNEY, mode=mode).x),
        ("fedavg(p=1) vs sgd", fedavg(bc, 1, SolverConfig(b=8, eta=0.5, K=200, tau=10),
                                      hockney=HOCKNEY, mode=mode), x_sgd),
        ("par_sgd(1x1) vs sgd", par_sgd(bc, ProcessorGrid(1, 1), "grid2d", LADDER, HOCKNEY,
                                        mode), x_sgd),
    ]


@pytest.fixture(scope="module")
def bc_padded(breast_cancer):
    return pad_rows(breast_cancer, 16, 16)


def test_criterion_3_degeneracy_ladder(criterion, bc_padded):
    diffs = {name: maxdiff(run.x, ref) for name, run, ref in ladder_runs(bc_padded)}
    ok = all(v <= 1e-12 for v in diffs.values())
    criterion(3, "degeneracy ladder", ok, ", ".join(f"{k}: {v:.1e}" for k, v in diffs.items()))


# 4 -------------------------------------------------------------------------

def matched_runs(bc, mode="reference"):
    out = []
    for K in (1, 200):
        run = fedavg(bc, 4, SolverConfig(b=8, eta=0.5, K=K, tau=1), matched=True,
                     hockney=HOCKNEY, mode=mode)
        out.append((K, run, seqsolvers.sgd(bc, SolverConfig(b=8, eta=0.5, K=K))[0]))
    return out


def test_criterion_4_fedavg_tau1(criterion, bc_padded):
    diffs = {K: maxdiff(run.x, ref) for K, run, ref in matched_runs(bc_padded)}
    ok = all(v <= 1e-12 for v in diffs.values())
    criterion(4, "FedAvg tau=1 equivalence", ok,
              f"one round: {diffs[1]:.1e}, 200 rounds: {diffs[200]:.1e}")


# 5 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def syn300():
    return gen_synthetic(256, 300, 10, seed=1)


def counter_runs(d, mode="reference"):
    return {
        "a": par_sgd(d, ProcessorGrid(2, 4), "grid2d", SolverConfig(b=16, K=100), HOCKNEY, mode),
        "b": fedavg(d, 8, SolverConfig(b=16, K=10 * 4, tau=4), hockney=HOCKNEY, mode=mode),
        "c": par_sstep_sgd(d, 4, SolverConfig(b=16, K=100, s=4), HOCKNEY, mode),
        "d": hybrid_sgd(d, ProcessorGrid(2, 4), SolverConfig(b=16, K=64, s=4, tau=8),
                        HOCKNEY, mode),
    }


def test_criterion_5_communication_counters(criterion, syn300):
    runs = counter_runs(syn300)
    led = {k: r.ledger.critical for k, r in runs.items()}
    n = syn300.n
    expected = {
        "a": (led["a"].words_moved, 100 * (8 + 75), led["a"].total_messages, 100 * (2 * 2 + 2)),
        "b": (led["b"].words_moved, 3000, led["b"].total_messages, 60),
        "c": (led["c"].words_moved, 100 // 4 * (6 * 256 + 64), led["c"].total_messages,
              25 * 4),
        "d": (led["d"].words["sstep_comm"], 16 * (6 * 64 + 32), led["d"].words["fedavg_comm"],
              8 * (n // 4)),
    }
    base = costmodel.params_from_dataset(syn300)
    preds = {
        "a": predict("sgd-2d", {**base, "K": 100, "b": 16, "p_r": 2, "p_c": 4}),
        "b": predict("fedavg", {**base, "K_tilde": 10, "tau": 4, "b": 16, "p": 8}),
        "c": predict("sstep", {**base, "K": 100, "s": 4, "b": 16, "p": 4}),
        "d": predict("hybrid", {**base, "K_hat": 64, "s": 4, "tau": 8, "b": 16,
                                "p_r": 2, "p_c": 4}),
    }
    ok, parts = True, []
    for key, (m1, e1, m2, e2) in expected.items():
        report = compare(preds[key], runs[key].ledger)
        good = m1 == e1 and m2 == e2 and report["W"].ok and report["L"].ok
        ok &= good
        parts.append(f"({key}) {m1}/{e1}, {m2}/{e2}{'' if good else ' MISMATCH'}")
    # hybrid: tau/s s-step allreduces in every averaging round
    rounds = 64 // 8
    per_round = led["d"].words["sstep_comm"] / rounds
    ok &= per_round == (8 // 4) * (math.comb(4, 2) * 8 ** 2 + 4 * 8)
    criterion(5, "communication counters", ok, "; ".join(parts))


# 6 -------------------------------------------------------------------------

def gd_vs_sgd(d, b=16, eta=1.0, epochs=50):
    d = pad_to_multiple(d, b)
    per_epoch = d.m // b
    _, t_gd = seqsolvers.gd(d, SolverConfig(b=b, eta=eta, K=epochs))
    _, t_sgd = seqsolvers.sgd(d, SolverConfig(b=b, eta=eta, K=epochs * per_epoch,
                                              trace_every=per_epoch))
    assert t_gd.grad_evals[-1] == t_sgd.grad_evals[-1]
    return t_sgd.final_objective, t_gd.final_objective


def fedavg_delay(d, b=16, eta=1.0, tau=100, ps=(1, 4, 16), rounds=20):
    d = pad_to_multiple(d, math.lcm(b, *ps))
    return [fedavg(d, p, SolverConfig(b=b, eta=eta, K=rounds * tau, tau=tau)).trace
            .final_objective for p in ps]


def test_criterion_6_convergence(criterion, breast_cancer, w1a):
    ok, parts = True, []
    f_sgd, f_gd = gd_vs_sgd(breast_cancer)
    ok &= f_sgd <= f_gd + 1e-6
    parts.append(f"breast-cancer SGD {f_sgd:.4f} <= GD {f_gd:.4f}")
    reason = unavailable(w1a)
    if reason:
        ok = False
        parts.append(f"{reason}: GD-vs-SGD and FedAvg delay not evaluated")
    else:
        f_sgd, f_gd = gd_vs_sgd(w1a)
        ok &= f_sgd <= f_gd + 1e-6
        parts.append(f"w1a SGD {f_sgd:.4f} <= GD {f_gd:.4f}")
        finals = fedavg_delay(w1a)
        ok &= all(a <= b + 1e-6 for a, b in zip(finals, finals[1:]))
        parts.append("w1a FedAvg p=1,4,16: " + ", ".join(f"{f:.4f}" for f in finals))
    criterion(6, "convergence qualitative", ok, "; ".join(parts))


# 7 -------------------------------------------------------------------------

def same(a, b, fields=("F", "T", "M", "W", "L")):
    return all(getattr(a, f) == getattr(b, f) for f in fields)


draws = st.fixed_dictionaries({
    "K": st.integers(0, 4096), "b": st.integers(1, 256), "n": st.integers(1, 10 ** 5),
    "c": st.integers(1, 256), "m": st.integers(1, 10 ** 6), "q": st.integers(1, 128),
    "s": st.sampled_from([1, 2, 4, 8, 16, 32]), "tau": st.integers(1, 64),
})


def test_criterion_7_specialization_identities(criterion):
    failures = []

    @settings(max_examples=200, deadline=None, derandomize=True,
              suppress_health_check=[HealthCheck.too_slow])
    @given(draws)
    def check(p):
        q, s, tau = p["q"], p["s"], p["tau"]
        base = {k: p[k] for k in ("b", "n", "c", "m")}
        K_s = p["K"] - p["K"] % s
        cases = [
            ("2D p_c=1 = 1D-row", predict("sgd-2d", {**base, "K": p["K"], "p_r": q, "p_c": 1}),
             predict("sgd-row", {**base, "K": p["K"], "p": q}), ("F", "T", "M", "W", "L")),
            ("2D p_r=1 = 1D-col", predict("sgd-2d", {**base, "K": p["K"], "p_r": 1, "p_c": q}),
             predict("sgd-col", {**base, "K": p["K"], "p": q}), ("F", "T", "M", "W", "L")),
            ("hybrid p_r=1,tau=s = sstep",
             predict("hybrid", {**base, "K_hat": K_s, "s": s, "tau": s, "p_r": 1, "p_c": q}),
             predict("sstep", {**base, "K": K_s, "s": s, "p": q}), ("F", "T", "M", "W", "L")),
            ("hybrid p_c=1,s=1 = fedavg",
             predict("hybrid", {**base, "b": base["b"] * q, "K_hat": (p["K"] // tau) * tau,
                                "s": 1, "tau": tau, "p_r": q, "p_c": 1}),
             predict("fedavg", {**base, "b": base["b"] * q, "K_tilde": p["K"] // tau,
                                "tau": tau, "p": q}), ("W", "L")),
        ]
        for name, a, b, fields in cases:
            if not same(a, b, fields):
                failures.append((name, p))
        assert not failures

    try:
        check()
    except AssertionError:
        pass
    detail = ("200 draws x 4 identities exact" if not failures
              else f"{failures[0][0]} broke at {failures[0][1]}")
    criterion(7, "cost-model specialization identities", not failures, detail)


# 8 -------------------------------------------------------------------------

def identical(a, b) -> bool:
    return (np.array_equal(a.x, b.x) and a.ledger == b.ledger
            and a.spawn.clocks == b.spawn.clocks and a.spawn.events == b.spawn.events
            and a.trace.to_csv() == b.trace.to_csv())


def test_criterion_8_simulator_determinism(criterion, bc_padded, syn300):
    pairs = []
    for (name, ref, _), (_, thr, _) in zip(ladder_runs(bc_padded),
                                           ladder_runs(bc_padded, "threaded")):
        pairs.append((f"3:{name}", identical(ref, thr)))
    for (K, ref, _), (_, thr, _) in zip(matched_runs(bc_padded),
                                        matched_runs(bc_padded, "threaded")):
        pairs.append((f"4:K={K}", identical(ref, thr)))
    ref5, thr5 = counter_runs(syn300), counter_runs(syn300, "threaded")
    for key in ref5:
        pairs.append((f"5{key}", identical(ref5[key], thr5[key])))
    bad = [name for name, good in pairs if not good]
    criterion(8, "simulator determinism", not bad,
              f"{len(pairs) - len(bad)}/{len(pairs)} runs identical" +
              (f"; differing: {bad}" if bad else ""))


# 9 -------------------------------------------------------------------------

def test_criterion_9_interior_optimum(criterion):
    d = gen_synthetic(4096, 512, 16, seed=0)
    base = costmodel.params_from_dataset(d, K_hat=2048, b=4, tau=512)
    alpha, beta, gamma = 1e-6, 1e-9, 1e-12
    rows = costmodel.sweep(costmodel.hybrid_cells(16, [1, 2, 4, 8, 16, 32], base),
                           alpha, beta, gamma)
    best = rows[0]
    interior = best.s > 1 and best.p_r > 1 and best.p_c > 1
    # The winning cell's modeled communication is what the simulator measures.
    small = SolverConfig(b=4, eta=0.5, K=512, s=best.s, tau=512)
    run = hybrid_sgd(d, ProcessorGrid(best.p_r, best.p_c), small)
    measured = compare(predict("hybrid", {**base, "K_hat": 512, "s": best.s, "p_r": best.p_r,
                                          "p_c": best.p_c}), run.ledger)
    ok = interior and measured["W"].ok and measured["L"].ok
    criterion(9, "interior optimum of the grid sweep", ok,
              f"best s={best.s} p_r={best.p_r} p_c={best.p_c} speedup {best.speedup:.1f}x over "
              f"column-parallel SGD (alpha={alpha}, beta={beta}, gamma={gamma}); "
              f"simulated W/L match model: {measured['W'].ok and measured['L'].ok}")
