"""Screens and logistic models linking missingness components to data.

These are the mechanism-probing steps: compare observed variables across
the two sides of a dichotomized component score, then predict the score
from indicators or covariates with logistic regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import chi2, rankdata, t as t_dist

from .indicators import CATEGORICAL, NUMERIC, Dataset

WELCH_T = "welch_t"
CHI_SQUARE = "chi_square"

IRLS_MAX_ITER = 100
IRLS_TOL = 1e-8
SEPARATION_PROB_TOL = 1e-8
SEPARATION_COEF_BOUND = 15.0


@dataclass
class ScreenResult:
    variable: str
    test: str
    statistic: float
    df: float
    p_value: float
    testable: bool
    reason: str = ""
    n_group0: int = 0
    n_group1: int = 0
    n_excluded: int = 0
    group_summaries: dict | None = None


@dataclass
class LogisticFit:
    parameter_names: list[str]  # intercept first
    coefficients: np.ndarray
    standard_errors: np.ndarray | None  # None when suppressed by separation
    log_likelihood: float
    null_log_likelihood: float
    lr_chi2: float
    lr_df: int
    lr_p_value: float
    pseudo_r2: float
    auc: float
    sensitivity: float
    specificity: float
    correct_pct: float
    separated: bool
    converged: bool
    iterations: int
    aliased: list[str]
    n: int


def _welch(a: np.ndarray, b: np.ndarray) -> tuple[float, float, float]:
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    se2 = va / len(a) + vb / len(b)
    if se2 == 0.0:
        # both groups constant; equal means is a null result, unequal is infinite evidence
        return (0.0, float(len(a) + len(b) - 2), 1.0) if ma == mb else (np.inf, float(len(a) + len(b) - 2), 0.0)
    stat = (ma - mb) / np.sqrt(se2)
    df = se2**2 / ((va / len(a)) ** 2 / (len(a) - 1) + (vb / len(b)) ** 2 / (len(b) - 1))
    p = 2.0 * t_dist.sf(abs(stat), df)
    return float(stat), float(df), float(p)


def _chi_square(values: np.ndarray, flag: np.ndarray) -> tuple[float, float, float, dict]:
    levels = sorted({str(v) for v in values})
    strs = np.array([str(v) for v in values])
    table = np.array(
        [[np.sum((strs == lv) & (flag == g)) for g in (0, 1)] for lv in levels],
        dtype=np.float64,
    )
    counts = {lv: [int(c) for c in row] for lv, row in zip(levels, table)}
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if table.shape[0] < 2 or table.shape[1] < 2:
        return np.nan, np.nan, np.nan, counts
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
    stat = float(((table - expected) ** 2 / expected).sum())
    df = float((table.shape[0] - 1) * (table.shape[1] - 1))
    return stat, df, float(chi2.sf(stat, df)), counts


def screen(data: Dataset, component_flag: np.ndarray, variables: list[str]) -> list[ScreenResult]:
    """Compare each variable across the two component-flag groups.

    Numeric variables get a Welch t test on their observed values,
    categorical variables a Pearson chi-square on the level-by-flag table.
    Missing cells drop out pairwise; a group with fewer than two observed
    values makes the variable not testable (flagged, never raised).
    """
    flag = np.asarray(component_flag).astype(int)
    if flag.ndim != 1 or len(flag) != data.n:
        raise ValueError("component_flag must align with dataset rows")
    if not np.isin(flag, (0, 1)).all():
        raise ValueError("component_flag must be binary")
    results = []
    for name in variables:
        kind = data.kind(name)
        col = data.column(name)
        observed = ~data.missing_mask(name)
        excluded = int(data.n - observed.sum())
        g0, g1 = flag[observed] == 0, flag[observed] == 1
        n0, n1 = int(g0.sum()), int(g1.sum())
        if n0 < 2 or n1 < 2:
            results.append(
                ScreenResult(
                    variable=name,
                    test=WELCH_T if kind == NUMERIC else CHI_SQUARE,
                    statistic=np.nan,
                    df=np.nan,
                    p_value=np.nan,
                    testable=False,
                    reason=f"fewer than 2 observed values in a group (n0={n0}, n1={n1})",
                    n_group0=n0,
                    n_group1=n1,
                    n_excluded=excluded,
                )
            )
            continue
        if kind == NUMERIC:
            vals = col[observed].astype(np.float64)
            a, b = vals[g1], vals[g0]
            stat, df, p = _welch(a, b)
            summaries = {
                "group0": {"n": n0, "mean": float(b.mean()), "sd": float(b.std(ddof=1))},
                "group1": {"n": n1, "mean": float(a.mean()), "sd": float(a.std(ddof=1))},
            }
            results.append(
                ScreenResult(name, WELCH_T, stat, df, p, True, "", n0, n1, excluded, summaries)
            )
        else:
            vals = col[observed]
            stat, df, p, counts = _chi_square(vals, flag[observed])
            if np.isnan(stat):
                results.append(
                    ScreenResult(
                        variable=name,
                        test=CHI_SQUARE,
                        statistic=np.nan,
                        df=np.nan,
                        p_value=np.nan,
                        testable=False,
                        reason="contingency table has a single populated row or column",
                        n_group0=n0,
                        n_group1=n1,
                        n_excluded=excluded,
                        group_summaries={"counts": counts},
                    )
                )
            else:
                results.append(
                    ScreenResult(
                        name, CHI_SQUARE, stat, df, p, True, "", n0, n1, excluded, {"counts": counts}
                    )
                )
    return results


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve by the rank (Mann-Whitney) formula.

    Ties get midranks, so exactly half credit. Raises when only one class
    is present, where the area is undefined.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d and aligned")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary")
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC undefined: only one class present")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def _drop_aliased(x: np.ndarray, names: list[str]) -> tuple[np.ndarray, list[str], list[str]]:
    """Greedy left-to-right removal of linearly dependent columns."""
    kept_idx: list[int] = []
    rank = 0
    for j in range(x.shape[1]):
        trial = x[:, kept_idx + [j]]
        r = np.linalg.matrix_rank(trial)
        if r > rank:
            kept_idx.append(j)
            rank = r
    aliased = [names[j] for j in range(x.shape[1]) if j not in kept_idx]
    return x[:, kept_idx], [names[j] for j in kept_idx], aliased


def fit_logistic(
    y: np.ndarray, x: np.ndarray, predictor_names: list[str] | None = None
) -> LogisticFit:
    """Binary logistic regression by iteratively reweighted least squares.

    Newton steps run until the largest score component falls below 1e-8 or
    100 iterations pass. Complete or quasi-complete separation is detected
    from degenerate fitted probabilities or runaway standardized
    coefficients; the fit then reports the last iterate with standard
    errors suppressed while classification metrics stay available.
    """
    y = np.asarray(y).astype(np.float64)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] != len(y):
        raise ValueError("y and x must have the same number of rows")
    if not np.isfinite(x).all():
        raise ValueError("predictors must be finite")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("y must be binary")
    if y.min() == y.max():
        raise ValueError("y must contain both classes")
    if predictor_names is None:
        predictor_names = [f"x{j + 1}" for j in range(x.shape[1])]
    if len(predictor_names) != x.shape[1]:
        raise ValueError("predictor_names must match predictor columns")

    design = np.column_stack([np.ones(len(y)), x])
    names = ["intercept"] + list(predictor_names)
    aliased: list[str] = []
    if np.linalg.matrix_rank(design) < design.shape[1]:
        design, names, aliased = _drop_aliased(design, names)

    # predictor scale for the runaway-coefficient separation check
    sds = design.std(axis=0)
    sds[0] = 1.0

    beta = np.zeros(design.shape[1])
    converged = False
    singular = False
    iterations = 0
    for iterations in range(1, IRLS_MAX_ITER + 1):
        mu = expit(design @ beta)
        g = design.T @ (y - mu)
        if np.max(np.abs(g)) < IRLS_TOL:
            converged = True
            break
        w = mu * (1.0 - mu)
        hess = design.T @ (design * w[:, None])
        try:
            step = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            # weights underflow once probabilities saturate; keep the last iterate
            singular = True
            break
        beta = beta + step

    mu = expit(design @ beta)
    # post-fit separation detection: a fully saturated class or runaway
    # coefficients on the standardized predictor scale
    ones_done = bool((mu[y == 1.0] > 1.0 - SEPARATION_PROB_TOL).all())
    zeros_done = bool((mu[y == 0.0] < SEPARATION_PROB_TOL).all())
    separated = singular or ones_done or zeros_done or bool(
        np.max(np.abs(beta * sds)) > SEPARATION_COEF_BOUND
    )
    tiny = 1e-300
    ll = float(np.sum(y * np.log(np.maximum(mu, tiny)) + (1 - y) * np.log(np.maximum(1 - mu, tiny))))
    pbar = y.mean()
    ll0 = float(len(y) * (pbar * np.log(pbar) + (1 - pbar) * np.log(1 - pbar)))
    lr = 2.0 * (ll - ll0)
    df = design.shape[1] - 1
    lr_p = float(chi2.sf(lr, df)) if df > 0 else np.nan

    if separated:
        ses = None
    else:
        w = mu * (1.0 - mu)
        hess = design.T @ (design * w[:, None])
        try:
            ses = np.sqrt(np.diag(np.linalg.inv(hess)))
        except np.linalg.LinAlgError:
            ses = None

    predicted = mu > 0.5
    actual = y == 1.0
    n1 = int(actual.sum())
    n0 = len(y) - n1
    sens = float((predicted & actual).sum() / n1)
    spec = float((~predicted & ~actual).sum() / n0)
    correct = (sens * n1 + spec * n0) / len(y)
    return LogisticFit(
        parameter_names=names,
        coefficients=beta,
        standard_errors=ses,
        log_likelihood=ll,
        null_log_likelihood=ll0,
        lr_chi2=lr,
        lr_df=df,
        lr_p_value=lr_p,
        pseudo_r2=1.0 - ll / ll0,
        auc=roc_auc(mu, y.astype(int)),
        sensitivity=sens,
        specificity=spec,
        correct_pct=correct,
        separated=separated,
        converged=converged,
        iterations=iterations,
        aliased=aliased,
        n=len(y),
    )


@dataclass
class StratumResult:
    stratum: str
    testable: bool
    reason: str
    n: int
    screens: list[ScreenResult]
    fits: list[LogisticFit]
    fit_labels: list[str]


def stratified_rerun(
    data: Dataset,
    component_flag: np.ndarray,
    strata: str,
    variables: list[str],
    predictor_columns: list[str],
) -> list[StratumResult]:
    """Repeat screens and logistic fits inside each stratum level.

    Levels whose flag has a single class are reported not testable rather
    than fitted. Rows with a missing stratum value are left out entirely.
    """
    flag = np.asarray(component_flag).astype(int)
    col = data.column(strata)
    present = ~data.missing_mask(strata)
    levels = sorted({str(v) for v in col[present]})
    if len(levels) < 2:
        raise ValueError("strata column must have at least 2 levels")
    out = []
    for level in levels:
        rows = present & np.array([str(v) == level for v in col])
        sub = Dataset(
            column_names=list(data.column_names),
            columns=[c[rows] for c in data.columns],
            kinds=list(data.kinds),
        )
        sub_flag = flag[rows]
        n = int(rows.sum())
        if len(np.unique(sub_flag)) < 2:
            out.append(StratumResult(level, False, "component flag has a single class", n, [], [], []))
            continue
        stratum_screens = screen(sub, sub_flag, variables)
        fits = []
        labels = []
        if predictor_columns:
            design = np.column_stack([numeric_values(sub, name) for name in predictor_columns])
            keep = np.isfinite(design).all(axis=1)
            try:
                fits.append(fit_logistic(sub_flag[keep], design[keep], predictor_columns))
                labels.append("multiple")
            except ValueError:
                pass
        out.append(StratumResult(level, True, "", n, stratum_screens, fits, labels))
    return out


def numeric_values(data: Dataset, name: str) -> np.ndarray:
    """Column as floats for model matrices; missing cells become NaN.

    Binary categorical columns coded "0"/"1" (indicator columns live in
    screening datasets that way) convert transparently.
    """
    col = data.column(name)
    if data.kind(name) == NUMERIC:
        return col.astype(np.float64)
    out = np.full(len(col), np.nan)
    for i, v in enumerate(col):
        if v is None:
            continue
        if str(v) not in ("0", "1"):
            raise ValueError(f"column {name!r} is categorical and not binary-coded")
        out[i] = float(str(v))
    return out
