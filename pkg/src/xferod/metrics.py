"""Transferability scores computed on an object-level FeatureMatrix.

Implemented scores: evidence of a Bayesian linear head on class one-hot
columns (logme) and on normalized box coordinates (logme_pos), their sum
(tlogme), the class-conditional covariance trace ratio (hscore) and its
shrinkage-regularized variant, and the coding-rate gap (transrate).

The evidence maximization uses a thin SVD shared across all target columns
of one feature matrix and the classic fixed point
    alpha <- gamma / ||m||^2,  beta <- (n - gamma) / ||F m - y||^2
with everything expressed through the squared singular values.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTarget, InvalidData, NonConvergedWarning
from .store import FeatureMatrix

_LOG_2PI = float(np.log(2.0 * np.pi))
_PARAM_MIN = 1e-12
_PARAM_MAX = 1e12


@dataclass(frozen=True)
class EvidenceSolution:
    """Converged evidence maximum for one regression target."""

    alpha: float
    beta: float
    gamma: float
    m_norm_sq: float
    residual_sq: float
    log_evidence_per_sample: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class TransRateConfig:
    """Distortion parameter for the coding-rate entropy surrogate."""

    eps: float = 1e-4

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise InvalidData("eps must be > 0")


@dataclass(frozen=True)
class ShrinkageResult:
    """Shrinkage intensity and average eigenvalue tr(S)/D."""

    lam: float
    mu: float


@dataclass(frozen=True)
class ScoreConfig:
    transrate_eps: float = 1e-4
    standardize: bool = False  # opt-in per-column z-scoring, for ablations


@dataclass(frozen=True)
class MetricScore:
    metric: str
    extractor: str
    value: float | None


# ---------------------------------------------------------------------------
# Evidence maximization (logme family)
# ---------------------------------------------------------------------------

class _Spectrum:
    """Thin SVD of a feature matrix, shared by all target columns."""

    def __init__(self, features: np.ndarray):
        f = np.asarray(features, dtype=np.float64)
        if f.ndim != 2:
            raise InvalidData("features must be n×D")
        self.n, self.dim = f.shape
        if self.n < 2:
            raise InvalidData("need n >= 2 samples")
        if not np.all(np.isfinite(f)):
            raise InvalidData("features contain NaN or Inf")
        u, s, _vt = np.linalg.svd(f, full_matrices=False)
        self.u = u  # n×r
        self.sigma = s * s  # squared singular values, length r = min(n, D)

    def project(self, target: np.ndarray) -> np.ndarray:
        return self.u.T @ target


def _maximize_evidence(
    spectrum: _Spectrum,
    target: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-5,
) -> EvidenceSolution:
    y = np.asarray(target, dtype=np.float64)
    if y.shape != (spectrum.n,):
        raise InvalidData("target length does not match feature rows")
    if not np.all(np.isfinite(y)):
        raise InvalidData("target contains NaN or Inf")
    if np.ptp(y) == 0:
        raise DegenerateTarget("target is constant")

    n, dim = spectrum.n, spectrum.dim
    sigma = spectrum.sigma
    z = spectrum.project(y)
    z_sq = z * z
    y_sq = float(y @ y)
    resid_base = max(y_sq - float(np.sum(z_sq)), 0.0)

    alpha = beta = 1.0
    evidence = -np.inf
    gamma = m_sq = resid = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        den = alpha + beta * sigma
        gamma = float(np.sum(beta * sigma / den))
        m_sq = float(np.sum(beta * beta * sigma * z_sq / (den * den)))
        resid = resid_base + float(np.sum((alpha / den) ** 2 * z_sq))
        logdet = float(np.sum(np.log(den))) + (dim - sigma.size) * np.log(alpha)
        new_evidence = 0.5 * (
            n * np.log(beta)
            + dim * np.log(alpha)
            - logdet
            - beta * resid
            - alpha * m_sq
            - n * _LOG_2PI
        ) / n
        if abs(new_evidence - evidence) < tol:
            evidence = new_evidence
            converged = True
            break
        evidence = new_evidence
        if iterations == max_iter:
            break  # keep (alpha, beta) consistent with the reported evidence
        alpha = gamma / m_sq if m_sq > _PARAM_MIN else 1.0
        beta = (n - gamma) / max(resid, _PARAM_MIN)
        alpha = min(max(alpha, _PARAM_MIN), _PARAM_MAX)
        beta = min(max(beta, _PARAM_MIN), _PARAM_MAX)

    if not converged:
        warnings.warn(
            f"evidence fixed point hit {max_iter} iterations", NonConvergedWarning
        )
    return EvidenceSolution(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        m_norm_sq=m_sq,
        residual_sq=resid,
        log_evidence_per_sample=float(evidence),
        iterations=iterations,
        converged=converged,
    )


def logme_single(features: np.ndarray, target: np.ndarray) -> EvidenceSolution:
    """Maximum per-sample log evidence of target given features."""
    return _maximize_evidence(_Spectrum(features), target)


def _mean_column_evidence(spectrum: _Spectrum, columns: list[np.ndarray], what: str) -> float:
    values = []
    for i, col in enumerate(columns):
        try:
            values.append(_maximize_evidence(spectrum, col).log_evidence_per_sample)
        except DegenerateTarget:
            warnings.warn(f"{what} column {i} is degenerate; skipped")
    if not values:
        raise DegenerateTarget(f"all {what} columns are degenerate")
    return float(np.mean(values))


def logme_class(fm: FeatureMatrix) -> float:
    """Average evidence over one-hot class columns; degenerate columns skipped."""
    spectrum = _Spectrum(fm.features)
    classes = np.unique(fm.labels)
    columns = [(fm.labels == c).astype(np.float64) for c in classes]
    return _mean_column_evidence(spectrum, columns, "class")


def logme_pos(fm: FeatureMatrix) -> float:
    """Average evidence over the four normalized box-coordinate columns."""
    spectrum = _Spectrum(fm.features)
    columns = [fm.boxes[:, k].astype(np.float64) for k in range(4)]
    return _mean_column_evidence(spectrum, columns, "box-coordinate")


def tlogme(fm: FeatureMatrix) -> float:
    """Sum of the box-regression and classification evidence scores."""
    spectrum = _Spectrum(fm.features)
    pos = _mean_column_evidence(
        spectrum, [fm.boxes[:, k].astype(np.float64) for k in range(4)], "box-coordinate"
    )
    classes = np.unique(fm.labels)
    cls = _mean_column_evidence(
        spectrum, [(fm.labels == c).astype(np.float64) for c in classes], "class"
    )
    return pos + cls


def prop1_gap(fm: FeatureMatrix, target_col) -> tuple[float, float]:
    """Evidence score and the least-squares log-likelihood at the same beta.

    The evidence is a lower bound: callers assert
    log_evidence <= mle_loglik + 1e-9.
    """
    if isinstance(target_col, (int, np.integer)):
        target = fm.boxes[:, int(target_col)].astype(np.float64)
    else:
        target = np.asarray(target_col, dtype=np.float64)
    features = fm.features.astype(np.float64)
    n = features.shape[0]
    sol = logme_single(features, target)
    w_ls, *_ = np.linalg.lstsq(features, target, rcond=None)
    resid_sq = float(np.sum((target - features @ w_ls) ** 2))
    mle = 0.5 * (np.log(sol.beta) - _LOG_2PI) - sol.beta * resid_sq / (2.0 * n)
    return sol.log_evidence_per_sample, float(mle)


# ---------------------------------------------------------------------------
# Covariance-based scores
# ---------------------------------------------------------------------------

def _class_mean_rows(features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row i = mean feature of class labels[i] minus the global mean.

    Computed from the raw features so that a single-class input yields an
    exactly zero matrix (class mean == global mean, same reduction).
    """
    global_mean = features.mean(axis=0)
    out = np.empty_like(features)
    for c in np.unique(labels):
        mask = labels == c
        out[mask] = features[mask].mean(axis=0) - global_mean
    return out


def hscore(fm: FeatureMatrix) -> float:
    """tr(pinv(feature covariance) @ covariance of class-mean rows)."""
    features = fm.features.astype(np.float64)
    n = features.shape[0]
    if n < 2:
        raise InvalidData("need n > 1")
    centered = features - features.mean(axis=0)
    cov_f = centered.T @ centered / n
    z = _class_mean_rows(features, fm.labels)
    cov_z = z.T @ z / n
    return float(np.trace(np.linalg.pinv(cov_f, rcond=1e-10) @ cov_z))


def ledoit_wolf(centered: np.ndarray) -> ShrinkageResult:
    """Shrinkage intensity toward mu*I for a centered n×D matrix (1/n covariances)."""
    f = np.asarray(centered, dtype=np.float64)
    n, dim = f.shape
    if n < 2:
        raise InvalidData("need n >= 2")
    s = f.T @ f / n
    mu = float(np.trace(s)) / dim
    d2 = float(np.sum((s - mu * np.eye(dim)) ** 2))
    if d2 <= 0.0:
        return ShrinkageResult(lam=1.0, mu=mu)
    s_norm_sq = float(np.sum(s * s))
    row_norms_4 = float(np.sum(np.sum(f * f, axis=1) ** 2))
    b_bar2 = max(row_norms_4 - n * s_norm_sq, 0.0) / (n * n)
    b2 = min(b_bar2, d2)
    return ShrinkageResult(lam=b2 / d2, mu=mu)


def hscore_regularized(fm: FeatureMatrix) -> float:
    """H-score with the covariance shrunk toward mu*I and (1-lam) discounting."""
    features = fm.features.astype(np.float64)
    n, dim = features.shape
    if n < 2:
        raise InvalidData("need n > 1")
    centered = features - features.mean(axis=0)
    shrink = ledoit_wolf(centered)
    cov_f = centered.T @ centered / n
    cov_shrunk = (1.0 - shrink.lam) * cov_f + shrink.lam * shrink.mu * np.eye(dim)
    z = _class_mean_rows(features, fm.labels)
    cov_z = z.T @ z / n
    try:
        solved = np.linalg.solve(cov_shrunk, cov_z)
    except np.linalg.LinAlgError:
        warnings.warn("shrunk covariance is singular; falling back to pseudo-inverse")
        solved = np.linalg.pinv(cov_shrunk, rcond=1e-10) @ cov_z
    return float((1.0 - shrink.lam) * np.trace(solved))


def coding_rate(z: np.ndarray, eps: float) -> float:
    """(1/2) logdet(I + D/(m eps^2) Z^T Z) via the PSD Gram eigenvalues."""
    z = np.asarray(z, dtype=np.float64)
    m, dim = z.shape
    if m < 1:
        raise InvalidData("need m >= 1 rows")
    if eps <= 0:
        raise InvalidData("eps must be > 0")
    gram = z.T @ z
    eigvals = np.clip(np.linalg.eigvalsh(gram), 0.0, None)
    return float(0.5 * np.sum(np.log1p(dim / (m * eps * eps) * eigvals)))


def transrate(fm: FeatureMatrix, cfg: TransRateConfig = TransRateConfig()) -> float:
    """Coding rate of all features minus the class-conditional average.

    Both terms center their rows themselves, so a single-class input gives
    exactly zero (identical inputs to identical computations).
    """
    features = fm.features.astype(np.float64)
    n = features.shape[0]
    if n < 2:
        raise InvalidData("need n >= 2")
    rate = coding_rate(features - features.mean(axis=0), cfg.eps)
    conditional = 0.0
    for c in np.unique(fm.labels):
        rows = features[fm.labels == c]
        conditional += rows.shape[0] / n * coding_rate(rows - rows.mean(axis=0), cfg.eps)
    return float(rate - conditional)


# ---------------------------------------------------------------------------
# Batch scoring
# ---------------------------------------------------------------------------

METRIC_NAMES = ("logme", "tlogme", "logme_pos", "hscore", "hscore_reg", "transrate")


def score_all(fm: FeatureMatrix, cfg: ScoreConfig = ScoreConfig()) -> dict[str, MetricScore]:
    """All six scores; metrics with degenerate targets map to a null score."""
    if cfg.standardize:
        features = fm.features.astype(np.float64)
        sd = features.std(axis=0)
        features = (features - features.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        fm = FeatureMatrix(
            features=features.astype(np.float32),
            labels=fm.labels,
            boxes=fm.boxes,
            extractor_tag=fm.extractor_tag,
        )

    spectrum = _Spectrum(fm.features)
    box_columns = [fm.boxes[:, k].astype(np.float64) for k in range(4)]
    class_columns = [(fm.labels == c).astype(np.float64) for c in np.unique(fm.labels)]

    values: dict[str, float | None] = {}

    def attempt(name: str, fn) -> None:
        try:
            values[name] = float(fn())
        except DegenerateTarget:
            warnings.warn(f"metric {name!r} degenerate on {fm.extractor_tag!r}; null score")
            values[name] = None

    attempt("logme", lambda: _mean_column_evidence(spectrum, class_columns, "class"))
    attempt("logme_pos", lambda: _mean_column_evidence(spectrum, box_columns, "box-coordinate"))
    if values["logme"] is None or values["logme_pos"] is None:
        values["tlogme"] = None
    else:
        values["tlogme"] = values["logme"] + values["logme_pos"]
    attempt("hscore", lambda: hscore(fm))
    attempt("hscore_reg", lambda: hscore_regularized(fm))
    attempt("transrate", lambda: transrate(fm, TransRateConfig(eps=cfg.transrate_eps)))

    return {
        name: MetricScore(metric=name, extractor=fm.extractor_tag, value=values[name])
        for name in METRIC_NAMES
    }
