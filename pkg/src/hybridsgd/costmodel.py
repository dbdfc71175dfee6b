"""Closed-form flop, storage, bandwidth and latency predictions.

Two readings are available:

``"table"``
    Leading-order formulas as usually quoted: latency ``log p`` per
    collective, 1D-row SGD moving K*b words and 1D-column SGD moving K*n
    words, HybridSGD averaging charged every inner iteration.
``"derived"`` (default)
    The exact counts produced by :mod:`hybridsgd.parsolvers`: each allreduce
    costs 2*ceil(log2 q) messages and d words on a team of q > 1 ranks,
    averaging happens once per tau inner iterations, and flops follow the
    counting rules of :mod:`hybridsgd.logreg` with c*(n_local/n) expected
    nonzeros per sampled row.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field

from .dataio.dataset import Dataset
from .simgrid.ledger import CostLedger, MergedLedger, allreduce_messages, hockney_seconds

ALGORITHMS = ("sgd-row", "sgd-col", "sgd-2d", "sstep", "fedavg", "hybrid")
MODES = ("derived", "table")

_REQUIRED = {
    "sgd-row": ("K", "b", "n", "c", "m", "p"),
    "sgd-col": ("K", "b", "n", "c", "m", "p"),
    "sgd-2d": ("K", "b", "n", "c", "m", "p_r", "p_c"),
    "sstep": ("K", "s", "b", "n", "c", "m", "p"),
    "fedavg": ("K_tilde", "tau", "b", "n", "c", "m", "p"),
    "hybrid": ("K_hat", "s", "tau", "b", "n", "c", "m", "p_r", "p_c"),
}


def _log2(q: int) -> int:
    return math.ceil(math.log2(q)) if q > 1 else 0


def _pairs(s: int) -> int:
    return s * (s - 1) // 2


@dataclass(frozen=True)
class CostPrediction:
    algorithm: str
    mode: str
    F: float  # flops
    T: float  # transcendental ops
    M: float  # storage, words
    W: float  # bandwidth, words
    L: float  # latency, messages
    params: dict
    W_parts: dict = field(default_factory=dict)
    rate: float | None = None
    rate_condition: str = ""
    notes: tuple[str, ...] = ()

    def modeled_time(self, alpha: float, beta: float, gamma: float, phi: float = 4.0) -> float:
        return hockney_seconds(self.F, self.L, self.W, alpha, beta, gamma, self.T, phi)


def params_from_dataset(d: Dataset, **extra) -> dict:
    """Model parameters of a dataset: m, n and c = mean nonzeros per row."""
    counts = d.matrix.row_nnz()[: d.m_original]
    out = {"m": d.m, "n": d.n, "c": d.mean_row_nnz,
           "uniform": bool(counts.size == 0 or counts.min() == counts.max())}
    out.update(extra)
    return out


def _resolve(algorithm: str, params: Mapping) -> dict:
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    p = dict(params)
    if algorithm == "sgd-row":
        p.setdefault("p_r", p.get("p"))
        p["p_c"] = 1
    elif algorithm == "sgd-col":
        p.setdefault("p_c", p.get("p"))
        p["p_r"] = 1
    elif algorithm in ("sgd-2d", "hybrid") and "p_r" in p and "p_c" in p:
        p.setdefault("p", p["p_r"] * p["p_c"])
    missing = [k for k in _REQUIRED[algorithm] if p.get(k) is None]
    if missing:
        raise ValueError(f"{algorithm} prediction needs parameter(s) {', '.join(missing)}")
    for k in _REQUIRED[algorithm]:
        if p[k] < 0 or (k not in ("K", "K_tilde", "K_hat", "c") and p[k] <= 0):
            raise ValueError(f"parameter {k} must be positive, got {p[k]}")
    return p


def _sstep_flops(blocks: float, s: int, b: float, n: int, c: float, q: int) -> tuple[float, float]:
    """Derived flops and transcendentals of ``blocks`` s-blocks on q column ranks."""
    n_loc = math.ceil(n / q)
    nnz_row = c * n_loc / n
    per = (4 * s * b * nnz_row                      # Y x and Y^T u
           + 2 * _pairs(s) * b * b * nnz_row * nnz_row / n_loc  # Gram lower blocks
           + 2 * b * b * _pairs(s) + 2 * b * (s - 1)  # corrections
           + 2 * s * b                              # sigmoid
           + 2 * n_loc)                             # x update
    return blocks * per, blocks * s * b


def _derived(alg: str, p: dict) -> CostPrediction:
    n, c, m = p["n"], p["c"], p["m"]
    if alg in ("sgd-row", "sgd-col", "sgd-2d"):
        K, b, pr, pc = p["K"], p["b"], p["p_r"], p["p_c"]
        n_loc = math.ceil(n / pc)
        bl = b / pr
        F = K * (4 * bl * c * n_loc / n + 2 * bl + 2 * n_loc)
        T = K * bl
        W_u = K * bl if pc > 1 else 0
        W_g = K * n_loc if pr > 1 else 0
        W = W_u + W_g
        L = K * (allreduce_messages(pc) + allreduce_messages(pr))
        M = c * m / (pr * pc) + bl + n_loc
        parts = {"sgd_comm": W}
        rate, cond = (1 / (K * b) if K else math.inf), ""
    elif alg == "sstep":
        K, s, b, q = p["K"], p["s"], p["b"], p["p"]
        blocks = K / s
        F, T = _sstep_flops(blocks, s, b, n, c, q)
        gram, v = _pairs(s) * b * b, s * b
        on = q > 1
        W = blocks * (gram + v) * on
        L = blocks * allreduce_messages(q)
        M = c * m / q + gram + v + math.ceil(n / q)
        parts = {"sstep_comm": W, "sstep_comm.gram": blocks * gram * on,
                 "sstep_comm.v": blocks * v * on}
        rate, cond = (1 / (K * b) if K else math.inf), ""
    elif alg == "fedavg":
        Kt, tau, b, q = p["K_tilde"], p["tau"], p["b"], p["p"]
        bl = math.ceil(b / q)
        F = Kt * tau * (4 * bl * c + 2 * bl + 2 * n) + (Kt * n if q > 1 else 0)
        T = Kt * tau * bl
        W = Kt * n if q > 1 else 0
        L = Kt * allreduce_messages(q)
        M = c * m / q + n
        parts = {"fedavg_comm": W}
        rate = 1 / (Kt * b * q) if Kt else math.inf
        cond = "tau = O(sqrt(K_tilde / (b p)))"
    else:  # hybrid
        Kh, s, tau, b, pr, pc = p["K_hat"], p["s"], p["tau"], p["b"], p["p_r"], p["p_c"]
        if s > tau or tau % s:
            raise ValueError(f"hybrid needs s <= tau and s | tau (s={s}, tau={tau})")
        bl = b / pr
        n_loc = math.ceil(n / pc)
        blocks, rounds = Kh / s, Kh / tau
        F, T = _sstep_flops(blocks, s, bl, n, c, pc)
        F += rounds * n_loc if pr > 1 else 0
        gram, v = _pairs(s) * bl * bl, s * bl
        W_s = blocks * (gram + v) if pc > 1 else 0
        W_f = rounds * n_loc if pr > 1 else 0
        W = W_s + W_f
        L = blocks * allreduce_messages(pc) + rounds * allreduce_messages(pr)
        M = c * m / (pr * pc) + gram + v + n_loc
        parts = {"sstep_comm": W_s, "fedavg_comm": W_f,
                 "sstep_comm.gram": blocks * gram if pc > 1 else 0,
                 "sstep_comm.v": blocks * v if pc > 1 else 0}
        rate = 1 / (Kh * b * pr) if Kh else math.inf
        cond = "tau = O(sqrt(K_hat / (b p_r)))"
    return CostPrediction(alg, "derived", F, T, M, W, L, p, parts, rate, cond)


def _table(alg: str, p: dict) -> CostPrediction:
    n, c, m = p["n"], p["c"], p["m"]
    if alg in ("sgd-row", "sgd-col", "sgd-2d"):
        K, b, pr, pc = p["K"], p["b"], p["p_r"], p["p_c"]
        q = pr * pc
        if alg == "sgd-row":
            F, M, W = K * (b * c / q + n), c * m / q + n, K * b
            L = K * _log2(q)
        elif alg == "sgd-col":
            F, M, W = K * (b * c / q + n / q), c * m / q + b + n / q, K * n
            L = K * _log2(q)
        else:
            F, M = K * (b * c / q + n / pc), c * m / q + b / pr + n / pc
            W, L = K * (b / pr + n / pc), K * (_log2(pr) + _log2(pc))
        rate, cond = (1 / (K * b) if K else math.inf), ""
    elif alg == "sstep":
        K, s, b, q = p["K"], p["s"], p["b"], p["p"]
        F = (K / s) * (c * c * _pairs(s) * b * b / (n * q) + _pairs(s) * b * b + n / q)
        M = c * m / q + _pairs(s) * b * b + n / q
        W, L = (K / s) * _pairs(s) * b * b, (K / s) * _log2(q)
        rate, cond = (1 / (K * b) if K else math.inf), ""
    elif alg == "fedavg":
        Kt, tau, b, q = p["K_tilde"], p["tau"], p["b"], p["p"]
        F, M = Kt * tau * (b * c / q + n), c * m / q + n
        W, L = Kt * n, Kt * _log2(q)
        rate = 1 / (Kt * b * q) if Kt else math.inf
        cond = "tau = O(sqrt(K_tilde / (b p)))"
    else:
        Kh, s, tau, b, pr, pc = p["K_hat"], p["s"], p["tau"], p["b"], p["p_r"], p["p_c"]
        q = pr * pc
        F = (Kh / s) * (c * c * _pairs(s) * b * b / (n * q * pr)
                        + _pairs(s) * b * b / pr ** 2 + tau * n / pc)
        M = c * m / q + _pairs(s) * b * b / pr ** 2 + n / pc
        W = (Kh / s) * _pairs(s) * b * b / pr ** 2 + Kh * n / pc
        L = Kh * _log2(pr) + (Kh / s) * _log2(pc)
        rate = 1 / (Kh * b * pr) if Kh else math.inf
        cond = "tau = O(sqrt(K_hat / (b p_r)))"
    return CostPrediction(alg, "table", F, 0.0, M, W, L, p, {}, rate, cond)


def predict(algorithm: str, params: Mapping, mode: str = "derived") -> CostPrediction:
    """Predicted costs of ``algorithm``; see the module docstring for the two modes.

    ``K`` counts SGD iterations, ``K_tilde`` FedAvg averaging rounds of
    ``tau`` local iterations, ``K_hat`` HybridSGD inner iterations.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    p = _resolve(algorithm, params)
    pred = _derived(algorithm, p) if mode == "derived" else _table(algorithm, p)
    if p.get("uniform") is False:
        pred = CostPrediction(**{**asdict(pred), "notes": (
            "assumption violated: nonzeros per row are not uniform",)})
    return pred


@dataclass(frozen=True)
class Comparison:
    quantity: str
    measured: float
    predicted: float
    ratio: float
    ok: bool


@dataclass(frozen=True)
class CompareReport:
    algorithm: str
    rows: tuple[Comparison, ...]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def __getitem__(self, quantity: str) -> Comparison:
        for r in self.rows:
            if r.quantity == quantity:
                return r
        raise KeyError(quantity)

    def __str__(self) -> str:
        lines = [f"{self.algorithm}:"]
        for r in self.rows:
            lines.append(f"  {r.quantity:<18} measured={r.measured:<12g} predicted="
                         f"{r.predicted:<12g} ratio={r.ratio:.4g} {'PASS' if r.ok else 'FAIL'}")
        return "\n".join(lines)


def _ratio(measured: float, predicted: float) -> float:
    if predicted == 0:
        return 1.0 if measured == 0 else math.inf
    return measured / predicted


def compare(prediction: CostPrediction, ledger: CostLedger | MergedLedger,
            flop_tolerance: float = 2.0) -> CompareReport:
    """Measured/predicted ratios. W and L must match exactly in derived mode;
    flops must agree within a factor ``flop_tolerance``."""
    led = ledger.critical if isinstance(ledger, MergedLedger) else ledger
    exact = prediction.mode == "derived"
    rows = []
    for name, measured, predicted in (("W", led.words_moved, prediction.W),
                                      ("L", led.total_messages, prediction.L)):
        r = _ratio(measured, predicted)
        rows.append(Comparison(name, measured, predicted, r,
                               measured == predicted if exact else 0.5 <= r <= 2.0))
    for key, predicted in prediction.W_parts.items():
        measured = led.detail.get(key, 0) if "." in key else led.words[key]
        rows.append(Comparison(f"W[{key}]", measured, predicted, _ratio(measured, predicted),
                               measured == predicted))
    r = _ratio(led.total_flops, prediction.F)
    rows.append(Comparison("F", led.total_flops, prediction.F, r,
                           1 / flop_tolerance <= r <= flop_tolerance))
    return CompareReport(prediction.algorithm, tuple(rows))


# Grid sweeps ----------------------------------------------------------------

SWEEP_COLUMNS = ("algorithm", "s", "tau", "p_r", "p_c", "F", "W", "L", "modeled_time", "speedup")


@dataclass(frozen=True)
class SweepRow:
    algorithm: str
    s: int
    tau: int
    p_r: int
    p_c: int
    F: float
    W: float
    L: float
    modeled_time: float
    speedup: float = 1.0


def factorizations(p: int) -> list[tuple[int, int]]:
    return [(pr, p // pr) for pr in range(1, p + 1) if p % pr == 0]


def hybrid_cells(p: int, s_values: Iterable[int], base: Mapping) -> list[tuple[str, dict]]:
    """HybridSGD configurations over every p_r x p_c = p and every admissible s.

    Cells where p_r does not divide b or s does not divide tau are skipped.
    """
    cells = []
    for (pr, pc), s in itertools.product(factorizations(p), s_values):
        if base["b"] % pr or s > base["tau"] or base["tau"] % s:
            continue
        cells.append(("hybrid", {**base, "s": s, "p_r": pr, "p_c": pc}))
    return cells


def sweep(cells: Iterable[tuple[str, Mapping]], alpha: float, beta: float, gamma: float,
          phi: float = 4.0, mode: str = "derived",
          baseline: tuple[int, int, int] | None = None) -> list[SweepRow]:
    """Modeled time of every cell, fastest first.

    ``speedup`` is relative to the baseline cell ``(s, p_r, p_c)``; by default
    the s = 1 cell with the most column ranks (plain column-parallel SGD).
    """
    rows = []
    for alg, params in cells:
        pred = predict(alg, params, mode)
        p = pred.params
        rows.append(SweepRow(alg, p.get("s", 1), p.get("tau", 1), p.get("p_r", p.get("p", 1)),
                             p.get("p_c", 1), pred.F, pred.W, pred.L,
                             pred.modeled_time(alpha, beta, gamma, phi)))
    if not rows:
        return rows
    if baseline is None:
        ones = [r for r in rows if r.s == 1] or rows
        ref = max(ones, key=lambda r: (r.p_c, -r.p_r))
    else:
        matches = [r for r in rows if (r.s, r.p_r, r.p_c) == tuple(baseline)]
        if not matches:
            raise ValueError(f"baseline cell {baseline} is not in the sweep")
        ref = matches[0]
    out = [SweepRow(**{**asdict(r), "speedup": ref.modeled_time / r.modeled_time
                       if r.modeled_time else math.inf}) for r in rows]
    return sorted(out, key=lambda r: (r.modeled_time, r.s, r.p_r))


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([r.algorithm, r.s, r.tau, r.p_r, r.p_c, repr(float(r.F)),
                         repr(float(r.W)), repr(float(r.L)), repr(r.modeled_time),
                         repr(r.speedup)])
    return buf.getvalue()


def heatmap(rows: Iterable[SweepRow]) -> dict[tuple[int, int], float]:
    """Speedup keyed by (s, p_r), the layout of a grid-tuning heatmap."""
    return {(r.s, r.p_r): r.speedup for r in rows}
