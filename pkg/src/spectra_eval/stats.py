"""Cross-validation fold statistics: mean +/- two-standard-deviation
summaries and unpaired two-tailed t-tests.

The Student-t tail probability is computed here via the regularized
incomplete beta function (continued-fraction evaluation) rather than a
statistics library, so results are verifiable against published t-tables.
The classical pooled-variance test is the default; Welch's approximation is
selectable for unequal variances.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import DegenerateVariance, InputError, InsufficientFolds

VALID_METRICS = ("precision", "recall", "f1")


@dataclass(frozen=True)
class FoldScores:
    """Per-fold values of one metric under one experimental condition."""

    condition: str
    metric: str
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.metric not in VALID_METRICS:
            raise ValueError(f"metric must be one of {VALID_METRICS}, got {self.metric!r}")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ValueError("fold scores must lie in [0,1]")


@dataclass(frozen=True)
class Summary:
    mean: float
    sample_std: float
    errbar: float  # two sample standard deviations


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p_two_tailed: float


def _mean_var(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, var


def summarize(scores: FoldScores | Sequence[float]) -> Summary:
    """Mean, sample standard deviation (n-1), and the 2-sigma error bar."""
    values = scores.values if isinstance(scores, FoldScores) else tuple(scores)
    if len(values) < 2:
        raise InsufficientFolds(f"need at least 2 fold values, got {len(values)}")
    mean, var = _mean_var(values)
    std = math.sqrt(var)
    return Summary(mean, std, 2.0 * std)


def ttest_unpaired(
    a: FoldScores | Sequence[float],
    b: FoldScores | Sequence[float],
    variance_mode: str = "pooled",
) -> TTestResult:
    """Unpaired two-tailed t-test between two groups of fold scores.

    ``pooled`` is the classical equal-variance Student test with
    n1 + n2 - 2 degrees of freedom; ``welch`` uses the unequal-variance
    statistic with Satterthwaite degrees of freedom. Two identical-variance
    groups with equal means yield t=0, p=1; zero variance with unequal
    means has no defined statistic and raises :class:`DegenerateVariance`.
    """
    xs = tuple(a.values if isinstance(a, FoldScores) else a)
    ys = tuple(b.values if isinstance(b, FoldScores) else b)
    if len(xs) < 2 or len(ys) < 2:
        raise InsufficientFolds("each group needs at least 2 values")
    n1, n2 = len(xs), len(ys)
    m1, v1 = _mean_var(xs)
    m2, v2 = _mean_var(ys)

    if v1 == 0.0 and v2 == 0.0:
        if m1 == m2:
            return TTestResult(0.0, float(n1 + n2 - 2), 1.0)
        raise DegenerateVariance("both groups constant with unequal means")

    if variance_mode == "pooled":
        df = float(n1 + n2 - 2)
        pooled = ((n1 - 1) * v1 + (n2 - 1) * v2) / df
        se = math.sqrt(pooled * (1.0 / n1 + 1.0 / n2))
    elif variance_mode == "welch":
        q1, q2 = v1 / n1, v2 / n2
        se = math.sqrt(q1 + q2)
        df = (q1 + q2) ** 2 / (q1**2 / (n1 - 1) + q2**2 / (n2 - 1))
    else:
        raise InputError(f"unknown variance mode {variance_mode!r}")

    t = (m1 - m2) / se
    return TTestResult(t, df, two_tailed_p(t, df))


def two_tailed_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def student_t_cdf(t: float, df: float) -> float:
    """Student-t cumulative distribution function."""
    if t == 0.0:
        return 0.5
    tail = 0.5 * two_tailed_p(t, df)
    return tail if t < 0 else 1.0 - tail


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) by the symmetric continued-fraction expansion."""
    if a <= 0 or b <= 0:
        raise ValueError("beta parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0,1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # The continued fraction converges fastest below the distribution mean.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def _beta_cf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-15) -> float:
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        num = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + num * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + num / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        num = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + num * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + num / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


# ---------------------------------------------------------------------------
# File formats

def read_fold_scores_csv(path: str | Path) -> list[FoldScores]:
    """Read fold scores from CSV columns (condition, metric, fold, value)."""
    grouped: dict[tuple[str, str], list[tuple[int, float]]] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        required = {"condition", "metric", "fold", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InputError(f"{path}: expected CSV columns {sorted(required)}")
        for row in reader:
            key = (row["condition"], row["metric"])
            grouped.setdefault(key, []).append((int(row["fold"]), float(row["value"])))
    out = []
    for (condition, metric), pairs in grouped.items():
        pairs.sort()
        out.append(FoldScores(condition, metric, tuple(v for _, v in pairs)))
    return out


def stats_report(
    scores: Sequence[FoldScores],
    variance_mode: str = "pooled",
) -> dict:
    """Summaries for every condition plus pairwise t-tests per metric."""
    doc: dict = {"variance_mode": variance_mode, "summaries": [], "ttests": []}
    for s in scores:
        summary = summarize(s)
        doc["summaries"].append({
            "condition": s.condition,
            "metric": s.metric,
            "n_folds": len(s.values),
            "mean": summary.mean,
            "sample_std": summary.sample_std,
            "errbar": summary.errbar,
        })
    by_metric: dict[str, list[FoldScores]] = {}
    for s in scores:
        by_metric.setdefault(s.metric, []).append(s)
    for metric in sorted(by_metric):
        group = by_metric[metric]
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                result = ttest_unpaired(group[i], group[j], variance_mode)
                doc["ttests"].append({
                    "metric": metric,
                    "condition_a": group[i].condition,
                    "condition_b": group[j].condition,
                    "t": result.t,
                    "df": result.df,
                    "p_two_tailed": result.p_two_tailed,
                })
    return doc


def write_stats_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
