"""Cohort statistics: reference distributions, 2-sigma flagging, Welch
t-tests and top-k feature ranking.

The t-distribution tail is evaluated through the regularized incomplete
beta function (continued fraction, modified Lentz), so p-values do not
depend on an external statistics package and can be pinned against
independently computed values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import TooFewCases
from .signatures import COMPONENTS, DESCRIPTORS, MISSING, SignatureMatrix


@dataclass
class ReferenceTable:
    mean: np.ndarray  # (components, descriptors); NaN when no valid sample
    std: np.ndarray  # sample std (ddof=1); NaN when fewer than 2 samples
    count: np.ndarray  # valid sample count per cell
    components: tuple[str, ...] = COMPONENTS

    def to_csv(self) -> str:
        lines = ["component,descriptor,mean,std,count"]
        for i, comp in enumerate(self.components):
            for j, desc in enumerate(DESCRIPTORS):
                lines.append(
                    f"{comp},{desc},{self.mean[i, j]:.10g},{self.std[i, j]:.10g},{int(self.count[i, j])}"
                )
        return "\n".join(lines) + "\n"


def build_reference(control_cases: list[SignatureMatrix]) -> ReferenceTable:
    """Per-cell mean and sample std over the control cohort, ignoring -1."""
    if len(control_cases) < 2:
        raise TooFewCases(f"need at least 2 control cases, got {len(control_cases)}")
    stack = np.stack([c.values for c in control_cases])  # (cases, comp, desc)
    valid = stack != MISSING
    count = valid.sum(axis=0)
    mean = np.full(stack.shape[1:], np.nan)
    std = np.full(stack.shape[1:], np.nan)
    for i in range(stack.shape[1]):
        for j in range(stack.shape[2]):
            vals = stack[valid[:, i, j], i, j]
            if len(vals) >= 1:
                mean[i, j] = vals.mean()
            if len(vals) >= 2:
                std[i, j] = vals.std(ddof=1)
    return ReferenceTable(mean, std, count)


def flag_significant(case: SignatureMatrix, reference: ReferenceTable) -> np.ndarray:
    """Component flags: true when at least 3 of 6 descriptors fall outside
    the 2-sigma reference interval. Missing values and cells with an
    undefined sigma never count toward the 3."""
    flags = np.zeros(len(case.components), dtype=bool)
    for i in range(len(case.components)):
        hits = 0
        for j in range(len(DESCRIPTORS)):
            x = case.values[i, j]
            mu = reference.mean[i, j]
            sigma = reference.std[i, j]
            if x == MISSING or math.isnan(mu) or math.isnan(sigma):
                continue
            if abs(x - mu) > 2.0 * sigma:
                hits += 1
        flags[i] = hits >= 3
    return flags


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            break
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), accurate to ~1e-12."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, dof: float) -> float:
    """Two-sided p-value of a t statistic."""
    if math.isinf(t):
        return 0.0
    x = dof / (dof + t * t)
    return betainc_regularized(dof / 2.0, 0.5, x)


def welch_t_test(sample_a, sample_b) -> tuple[float, float, float]:
    """Welch statistic, Welch-Satterthwaite dof, two-sided p."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 observations")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = len(a), len(b)
    if va == 0.0 and vb == 0.0:
        dof = float(na + nb - 2)
        if ma == mb:
            return 0.0, dof, 1.0
        warnings.warn("both samples are constant but differ; p degenerates to 0")
        return math.copysign(math.inf, ma - mb), dof, 0.0
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    t = (ma - mb) / math.sqrt(se2)
    # Welch-Satterthwaite via variance-share ratios; dividing by se2 first
    # keeps the formula finite when the variances are subnormal.
    ra, rb = qa / se2, qb / se2
    dof = 1.0 / (ra * ra / (na - 1) + rb * rb / (nb - 1))
    return float(t), float(dof), t_sf_two_sided(t, dof)


def rank_top_k(
    feature_table: dict[str, dict[str, float]],
    group_labels: dict[str, str],
    k: int,
    insignificant_table: dict[str, dict[str, float]] | None = None,
) -> list[dict]:
    """Rank features separating the experimental group from the controls.

    Test one compares each feature's experimental values with the controls
    and keeps features with p < 0.05; when a second table of values from
    insignificant regions is supplied, test two additionally requires those
    values NOT to differ from the controls (p >= 0.05). The survivors are
    ranked by ascending test-one p-value and the top k returned as rows of
    {feature, t, dof, p}.
    """
    controls = [c for c, g in group_labels.items() if g == "control"]
    experimental = [c for c, g in group_labels.items() if g == "experimental"]
    rows = []
    for feature in sorted(feature_table):
        values = feature_table[feature]
        a = [values[c] for c in experimental if c in values]
        b = [values[c] for c in controls if c in values]
        if len(a) < 2 or len(b) < 2:
            continue
        t, dof, p = welch_t_test(a, b)
        if p >= 0.05:
            continue
        if insignificant_table is not None and feature in insignificant_table:
            insig = insignificant_table[feature]
            a2 = [insig[c] for c in experimental if c in insig]
            if len(a2) >= 2:
                _, _, p2 = welch_t_test(a2, b)
                if p2 < 0.05:
                    continue
        rows.append({"feature": feature, "t": t, "dof": dof, "p": p})
    rows.sort(key=lambda r: (r["p"], r["feature"]))
    return rows[:k]


def ranked_features_to_csv(rows: list[dict]) -> str:
    lines = ["feature,t,dof,p"]
    for r in rows:
        lines.append(f"{r['feature']},{r['t']:.10g},{r['dof']:.10g},{r['p']:.10g}")
    return "\n".join(lines) + "\n"


def signature_feature_table(
    cases: dict[str, SignatureMatrix]
) -> dict[str, dict[str, float]]:
    """Flatten signature matrices into per-feature per-case values, skipping
    -1 sentinels; feature names are 'component/descriptor'."""
    table: dict[str, dict[str, float]] = {}
    for case_id, matrix in cases.items():
        for i, comp in enumerate(matrix.components):
            for j, desc in enumerate(DESCRIPTORS):
                v = matrix.values[i, j]
                if v == MISSING:
                    continue
                table.setdefault(f"{comp}/{desc}", {})[case_id] = float(v)
    return table
