"""Correlation-based quality assessment of transferability scores.

Given a scenario table (scores per metric plus realized transfer map per
scenario), computes Pearson, Spearman (midranks) and Kendall tau-b (tie
corrected) with two-sided p-values, plus a ranking report answering "would
picking the metric's top scenario have picked the best transfer?".

p-values use the t approximation (Pearson/Spearman) and the tie-adjusted
normal approximation (Kendall); an exact permutation method is available
for small tables (M <= 10).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, stdtr

from .errors import DegenerateSeries, TooFewScenarios
from .store import METRIC_ORDER, ScenarioTable

SIGNIFICANCE_LEVEL = 0.05
_EXACT_MAX_M = 10
_STATS = ("pearson", "spearman", "kendall")


@dataclass(frozen=True)
class CorrelationResult:
    pearson_r: float
    spearman_rho: float
    kendall_tau: float
    p_pearson: float
    p_spearman: float
    p_kendall: float
    m: int
    significant: dict[str, bool]

    def stat(self, name: str) -> tuple[float, float]:
        return {
            "pearson": (self.pearson_r, self.p_pearson),
            "spearman": (self.spearman_rho, self.p_spearman),
            "kendall": (self.kendall_tau, self.p_kendall),
        }[name]


@dataclass(frozen=True)
class RankEntry:
    """Outcome of selecting the top-scored scenario with one metric."""

    metric: str
    chosen_scenario: str
    tied: bool
    top1_hit: bool
    regret: float


def _validate_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D of equal length")
    if x.size < 3:
        raise TooFewScenarios(f"need M >= 3, got {x.size}")
    return x, y


def midranks(values: np.ndarray) -> np.ndarray:
    """Average-rank transform; tied values share the mean of their ranks."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(xc @ xc))
    sy = float(np.sqrt(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateSeries("constant series has no correlation")
    return float(xc @ yc) / (sx * sy)


def pvalue_from_r(r: float, m: int) -> float:
    """Two-sided p of a (Pearson-type) correlation via the Student-t transform."""
    denom = max(1.0 - r * r, 0.0)
    if denom == 0.0:
        return 0.0
    t = abs(r) * np.sqrt((m - 2) / denom)
    return float(2.0 * stdtr(m - 2, -t))


def _kendall_counts(x: np.ndarray, y: np.ndarray):
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(x.size, k=1)
    s = float(np.sum(dx[iu] * dy[iu]))
    _, tx = np.unique(x, return_counts=True)
    _, ty = np.unique(y, return_counts=True)
    return s, tx.astype(np.float64), ty.astype(np.float64)


def pvalue_from_kendall_s(s: float, m: int, tx: np.ndarray, ty: np.ndarray) -> float:
    """Two-sided p of the concordance statistic S under the tie-adjusted normal null."""
    v0 = m * (m - 1) * (2 * m + 5)
    vt = float(np.sum(tx * (tx - 1) * (2 * tx + 5)))
    vu = float(np.sum(ty * (ty - 1) * (2 * ty + 5)))
    sum_t = float(np.sum(tx * (tx - 1)))
    sum_u = float(np.sum(ty * (ty - 1)))
    sum_t2 = float(np.sum(tx * (tx - 1) * (tx - 2)))
    sum_u2 = float(np.sum(ty * (ty - 1) * (ty - 2)))
    var = (v0 - vt - vu) / 18.0 + sum_t * sum_u / (2.0 * m * (m - 1))
    if m > 2:
        var += sum_t2 * sum_u2 / (9.0 * m * (m - 1) * (m - 2))
    if var <= 0.0:
        return 1.0
    z = abs(s) / np.sqrt(var)
    return float(2.0 * ndtr(-z))


def _all_permutations(m: int):
    return itertools.permutations(range(m))


def _exact_pvalue_linear(x: np.ndarray, y: np.ndarray) -> float:
    """Exact permutation p for a statistic monotone in sum(x_i * y_perm(i))."""
    m = x.size
    xc = x - x.mean()
    yc = y - y.mean()
    observed = abs(float(xc @ yc))
    hits = total = 0
    perm_iter = _all_permutations(m)
    while True:
        batch = np.array(list(itertools.islice(perm_iter, 200_000)), dtype=np.int64)
        if batch.size == 0:
            break
        stats = np.abs(yc[batch] @ xc)
        hits += int(np.sum(stats >= observed - 1e-12))
        total += batch.shape[0]
    return hits / total


def _exact_pvalue_kendall(x: np.ndarray, y: np.ndarray) -> float:
    m = x.size
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu, ju = np.triu_indices(m, k=1)
    dx_pairs = dx[iu, ju]
    observed = abs(float(np.sum(dx_pairs * dy[iu, ju])))
    hits = total = 0
    perm_iter = _all_permutations(m)
    while True:
        batch = np.array(list(itertools.islice(perm_iter, 100_000)), dtype=np.int64)
        if batch.size == 0:
            break
        s = np.sum(dx_pairs[None, :] * dy[batch[:, iu], batch[:, ju]], axis=1)
        hits += int(np.sum(np.abs(s) >= observed - 1e-12))
        total += batch.shape[0]
    return hits / total


def _check_exact(m: int) -> None:
    if m > _EXACT_MAX_M:
        raise ValueError(f"exact permutation test limited to M <= {_EXACT_MAX_M}")


def pearson(x, y, *, exact: bool = False) -> tuple[float, float]:
    """Sample linear correlation with two-sided p (t approximation)."""
    x, y = _validate_pair(x, y)
    r = _pearson_r(x, y)
    if exact:
        _check_exact(x.size)
        return r, _exact_pvalue_linear(x, y)
    return r, pvalue_from_r(r, x.size)


def spearman(x, y, *, exact: bool = False) -> tuple[float, float]:
    """Rank correlation on midranks, p via the same t approximation."""
    x, y = _validate_pair(x, y)
    rx, ry = midranks(x), midranks(y)
    rho = _pearson_r(rx, ry)
    if exact:
        _check_exact(x.size)
        return rho, _exact_pvalue_linear(rx, ry)
    return rho, pvalue_from_r(rho, x.size)


def kendall(x, y, *, exact: bool = False) -> tuple[float, float]:
    """Tau-b with tie correction, p via the tie-adjusted normal approximation."""
    x, y = _validate_pair(x, y)
    m = x.size
    s, tx, ty = _kendall_counts(x, y)
    n0 = m * (m - 1) / 2.0
    n1 = float(np.sum(tx * (tx - 1) / 2.0))
    n2 = float(np.sum(ty * (ty - 1) / 2.0))
    denom = np.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0.0:
        raise DegenerateSeries("all-tied series has no rank correlation")
    tau = s / denom
    if exact:
        _check_exact(m)
        return float(tau), _exact_pvalue_kendall(x, y)
    return float(tau), pvalue_from_kendall_s(s, m, tx, ty)


# ---------------------------------------------------------------------------
# Table-level evaluation
# ---------------------------------------------------------------------------

def _paired(table: ScenarioTable, metric: str) -> tuple[np.ndarray, np.ndarray]:
    pairs = [
        (score, map_value)
        for score, map_value in zip(table.scores[metric], table.map_values)
        if score is not None
    ]
    scores = np.array([p[0] for p in pairs], dtype=np.float64)
    maps = np.array([p[1] for p in pairs], dtype=np.float64)
    return scores, maps


def evaluate_table(
    table: ScenarioTable,
    *,
    alpha: float = SIGNIFICANCE_LEVEL,
    exact: bool = False,
) -> dict[str, CorrelationResult | None]:
    """One CorrelationResult per metric column vs map; None when unavailable.

    Null scores are excluded pairwise per metric; a metric left with fewer
    than 3 scenarios, or with a constant series, is reported unavailable.
    """
    if table.m < 3:
        raise TooFewScenarios(f"need M >= 3 scenarios, got {table.m}")
    results: dict[str, CorrelationResult | None] = {}
    for metric in table.metric_names:
        scores, maps = _paired(table, metric)
        if scores.size < 3:
            results[metric] = None
            continue
        try:
            r, p_r = pearson(scores, maps, exact=exact)
            rho, p_rho = spearman(scores, maps, exact=exact)
            tau, p_tau = kendall(scores, maps, exact=exact)
        except DegenerateSeries:
            results[metric] = None
            continue
        results[metric] = CorrelationResult(
            pearson_r=r,
            spearman_rho=rho,
            kendall_tau=tau,
            p_pearson=p_r,
            p_spearman=p_rho,
            p_kendall=p_tau,
            m=int(scores.size),
            significant={
                "pearson": p_r < alpha,
                "spearman": p_rho < alpha,
                "kendall": p_tau < alpha,
            },
        )
    return results


def rank_report(table: ScenarioTable) -> list[RankEntry]:
    """Top-1 selection quality per metric: hit/miss and map regret."""
    if table.m < 2:
        raise TooFewScenarios(f"need M >= 2 scenarios, got {table.m}")
    best_map = max(table.map_values)
    entries = []
    for metric in table.metric_names:
        scored = [
            (score, sid, map_value)
            for score, sid, map_value in zip(
                table.scores[metric], table.scenario_ids, table.map_values
            )
            if score is not None
        ]
        if not scored:
            continue
        top_score = max(score for score, _, _ in scored)
        top = sorted((sid, mv) for score, sid, mv in scored if score == top_score)
        chosen_sid, chosen_map = top[0]
        entries.append(
            RankEntry(
                metric=metric,
                chosen_scenario=chosen_sid,
                tied=len(top) > 1,
                top1_hit=chosen_map == best_map,
                regret=best_map - chosen_map,
            )
        )
    return entries


def mean_correlations(results) -> dict[str, float]:
    """Average the three statistics (not the p-values) over CorrelationResults."""
    available = [res for res in results if res is not None]
    if not available:
        raise DegenerateSeries("no available correlation results to aggregate")
    return {
        "pearson": float(np.mean([res.pearson_r for res in available])),
        "spearman": float(np.mean([res.spearman_rho for res in available])),
        "kendall": float(np.mean([res.kendall_tau for res in available])),
    }


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

def _ordered_metrics(results: dict[str, CorrelationResult | None]) -> list[str]:
    return sorted(
        results,
        key=lambda m: (METRIC_ORDER.index(m) if m in METRIC_ORDER else len(METRIC_ORDER), m),
    )


def report_csv(results: dict[str, CorrelationResult | None]) -> str:
    """CSV rows `metric,stat,value,p,significant,m`; unavailable -> empty cells."""
    lines = ["metric,stat,value,p,significant,m"]
    for metric in _ordered_metrics(results):
        res = results[metric]
        for stat in _STATS:
            if res is None:
                lines.append(f"{metric},{stat},,,,")
            else:
                value, p = res.stat(stat)
                lines.append(
                    f"{metric},{stat},{value!r},{p!r},{str(res.significant[stat]).lower()},{res.m}"
                )
    return "\n".join(lines) + "\n"


def pretty_report(results: dict[str, CorrelationResult | None]) -> str:
    """Metrics as columns, one row per statistic; '*' marks non-significant."""
    metrics = _ordered_metrics(results)
    width = max([len(m) for m in metrics] + [8]) + 2
    header = "stat".ljust(10) + "".join(m.rjust(width) for m in metrics)
    lines = [header]
    for stat in _STATS:
        cells = []
        for metric in metrics:
            res = results[metric]
            if res is None:
                cells.append("n/a".rjust(width))
            else:
                value, _ = res.stat(stat)
                mark = "" if res.significant[stat] else "*"
                cells.append(f"{value:+.3f}{mark}".rjust(width))
        lines.append(stat.ljust(10) + "".join(cells))
    return "\n".join(lines) + "\n"
