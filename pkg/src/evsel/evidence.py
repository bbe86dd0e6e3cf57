"""Log evidence of Bayesian ridge / LS-SVM and its per-class maximization.

The marginal likelihood of one binary target column ``y`` under

    y_n ~ N(x_n^T w, 1/beta),    w ~ N(0, I/alpha)

is evaluated entirely in the eigenbasis of ``X X^T`` (``s``, ``h = U^T X y``,
``y^T y``).  Eliminating ``beta`` at its closed-form optimum leaves a 1-D
function ``F(lam)`` of the regularization ``lam = alpha / beta``, whose
stationary points are the fixed points of

    lam <- gamma / (beta(lam) * m^T m),

iterated here with Aitken delta-squared extrapolation.  The classic
(alpha, beta) fixed-point updates and the EM updates are provided as
baselines; all four share the stopping rule of :func:`optimize_lambda`.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError, DegenerateClassError, DegenerateFitError
from .spectral import EigenBasis, FeatureBank

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

#: Relative threshold on ``y^T y - sum h^2/(lam+s)`` below which the fit is degenerate.
DEGENERATE_TOL = 1e-12

#: Iterates beyond this are treated as divergence.
LAMBDA_CEILING = 1e300

METHODS = ("aitken", "lambda_plain", "fixed_point_ab", "em")


class FixedPointConditionWarning(UserWarning):
    """The asymptotic slope condition for a fixed point is not certified."""


@dataclass(frozen=True)
class HyperparamState:
    alpha: float
    beta: float
    lam: float
    gamma: float = float("nan")
    log_evidence: float = float("nan")

    @classmethod
    def from_ab(cls, alpha, beta, **kw):
        return cls(alpha=alpha, beta=beta, lam=alpha / beta, **kw)


@dataclass(frozen=True)
class OptimOptions:
    lambda_init: float = 1.0
    epsilon: float = 1e-5
    max_iters: int = 500
    method: str = "aitken"
    #: Also fall back to ``l2`` when the extrapolation points against the step.
    aitken_guard: bool = True

    def __post_init__(self):
        if not (self.lambda_init > 0 and math.isfinite(self.lambda_init)):
            raise DataError(f"lambda_init must be positive, got {self.lambda_init}")
        if not self.epsilon > 0:
            raise DataError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise DataError(f"max_iters must be a positive integer, got {self.max_iters}")
        if self.method not in METHODS:
            raise DataError(f"unknown method {self.method!r}; expected one of {METHODS}")


class TraceRecord(NamedTuple):
    iteration: int
    lam: float
    log_evidence: float
    elapsed_ms: float


@dataclass(frozen=True)
class EvidenceResult:
    class_index: int
    state: HyperparamState
    iterations: int
    converged: bool
    trace: tuple = field(repr=False)
    fallback_count: int = 0
    evaluations: int = 0
    method: str = "aitken"

    @property
    def lam(self) -> float:
        return self.state.lam

    @property
    def log_evidence(self) -> float:
        return self.state.log_evidence


@dataclass(frozen=True)
class PosteriorState:
    m_spectral: np.ndarray
    mtm: float
    residual: float
    tr_ainv: float
    tr_ainv_gram: float


class AitkenStep(NamedTuple):
    value: float
    fallback: bool


class SlopeCheck(NamedTuple):
    slope: float
    warning: str | None


def _cls(basis: EigenBasis, k: int):
    if not 0 <= k < basis.k:
        raise DataError(f"class index {k} out of range for K={basis.k}")
    return basis.s, basis.h[:, k], float(basis.yty[k])


def _check_positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise DataError(f"{name} must be positive, got {v}")


def _residual_term(s, h, yty, lam):
    """``y^T y - sum_d h_d^2 / (lam + s_d)``, i.e. ``N / beta(lam)``."""
    r = yty - np.sum(h * h / (lam + s))
    if not r > DEGENERATE_TOL * yty:
        raise DegenerateFitError(
            f"degenerate fit at lambda={lam:g}: residual term {r:.3g} is not positive "
            "(targets interpolated exactly)"
        )
    return float(r)


def gamma_of(s, lam: float) -> float:
    """Effective number of parameters ``sum_d s_d / (lam + s_d)``."""
    _check_positive(lam=lam)
    s = np.asarray(s, dtype=np.float64)
    return float(np.sum(s / (lam + s)))


def beta_of_lambda(basis: EigenBasis, k: int, lam: float) -> float:
    """Noise precision maximizing the evidence at fixed ``lam``."""
    _check_positive(lam=lam)
    s, h, yty = _cls(basis, k)
    return basis.n / _residual_term(s, h, yty, lam)


def log_evidence_ab(basis: EigenBasis, k: int, alpha: float, beta: float) -> float:
    """Log marginal likelihood ``L(alpha, beta)`` of class ``k``."""
    _check_positive(alpha=alpha, beta=beta)
    s, h, yty = _cls(basis, k)
    n, d = basis.n, basis.d
    a = alpha + beta * s
    return float(
        0.5 * d * math.log(alpha)
        + 0.5 * n * math.log(beta)
        - 0.5 * np.sum(np.log(a))
        - 0.5 * beta * yty
        + 0.5 * beta * beta * np.sum(h * h / a)
        - 0.5 * n * LOG_2PI
    )


def log_evidence_1d(basis: EigenBasis, k: int, lam):
    """Log evidence with ``beta`` profiled out, as a function of ``lam`` only.

    ``lam`` may be a scalar or a 1-D array (evaluated pointwise); the array
    form is what grid searches use.
    """
    s, h, yty = _cls(basis, k)
    n = basis.n
    lam_arr = np.asarray(lam, dtype=np.float64)
    if np.any(~(lam_arr > 0)):
        raise DataError("lambda must be positive")
    if lam_arr.ndim == 0:
        r = _residual_term(s, h, yty, float(lam_arr))
        occam = np.sum(np.log(lam_arr / (lam_arr + s)))
        return float(0.5 * occam + 0.5 * n * (math.log(n) - 1.0 - LOG_2PI) - 0.5 * n * math.log(r))
    lam_col = lam_arr[:, None]
    r = yty - np.sum(h * h / (lam_col + s), axis=1)
    if np.any(~(r > DEGENERATE_TOL * yty)):
        raise DegenerateFitError("degenerate fit on part of the lambda grid")
    occam = np.sum(np.log(lam_col / (lam_col + s)), axis=1)
    return 0.5 * occam + 0.5 * n * (math.log(n) - 1.0 - LOG_2PI) - 0.5 * n * np.log(r)


def posterior_state(basis: EigenBasis, k: int, alpha: float, beta: float) -> PosteriorState:
    """Posterior summaries computed in the eigenbasis (no ``D x D`` inverse)."""
    _check_positive(alpha=alpha, beta=beta)
    s, h, yty = _cls(basis, k)
    a = alpha + beta * s
    m = beta * h / a
    resid = yty - 2.0 * np.dot(h, m) + np.dot(s, m * m)
    return PosteriorState(
        m_spectral=m,
        mtm=float(np.dot(m, m)),
        residual=float(max(resid, 0.0)),
        tr_ainv=float(np.sum(1.0 / a)),
        tr_ainv_gram=float(np.sum(s / a)),
    )


def _check_post(post: PosteriorState):
    if post.mtm == 0.0:
        raise DegenerateClassError("posterior mean is zero: X y = 0 for this class")
    if post.residual == 0.0:
        raise DegenerateFitError("training residual is zero")


def fixed_point_step_ab(basis: EigenBasis, k: int, state: HyperparamState) -> HyperparamState:
    """One MacKay update ``alpha = gamma / m^T m``, ``beta = (N - gamma) / ||y - X^T m||^2``."""
    post = posterior_state(basis, k, state.alpha, state.beta)
    _check_post(post)
    g = gamma_of(basis.s, state.alpha / state.beta)
    return HyperparamState.from_ab(g / post.mtm, (basis.n - g) / post.residual, gamma=g)


def em_step(basis: EigenBasis, k: int, state: HyperparamState) -> HyperparamState:
    """One EM update of ``(alpha, beta)``."""
    post = posterior_state(basis, k, state.alpha, state.beta)
    _check_post(post)
    alpha = basis.d / (post.mtm + post.tr_ainv)
    beta = basis.n / (post.residual + post.tr_ainv_gram)
    return HyperparamState.from_ab(alpha, beta)


def lambda_step(basis: EigenBasis, k: int, lam: float) -> float:
    """The 1-D fixed-point map ``lam -> gamma / (beta * m^T m)``."""
    _check_positive(lam=lam)
    s, h, yty = _cls(basis, k)
    t = 1.0 / (lam + s)
    r = _residual_term(s, h, yty, lam)
    h2t = h * h * t
    mtm = float(np.dot(h2t, t))
    if mtm == 0.0:
        raise DegenerateClassError(f"class {k}: X y = 0, evidence has no maximizer")
    gamma = float(np.dot(s, t))
    return gamma * r / (basis.n * mtm)


def aitken_extrapolate(l0: float, l1: float, l2: float) -> AitkenStep:
    """Delta-squared extrapolation through ``(l0, l1)``, ``(l1, l2)``.

    ``fallback`` is set, and ``value`` is ``l2``, when the secant is parallel
    to the diagonal or the intersection is non-positive or non-finite.
    """
    d1 = l1 - l0
    denom = (l2 - l1) - d1
    if denom == 0.0:
        return AitkenStep(l2, True)
    with np.errstate(all="ignore"):
        value = l0 - d1 * d1 / denom
    if not math.isfinite(value) or value <= 0.0:
        return AitkenStep(l2, True)
    return AitkenStep(value, False)


def _done(lam, lam0, eps):
    diff = abs(lam - lam0)
    return diff < eps or diff < eps * lam0


def optimize_lambda(basis: EigenBasis, k: int, opts: OptimOptions | None = None) -> EvidenceResult:
    """Maximize the evidence of class ``k`` over ``lam``.

    Iterates the rule selected by ``opts.method`` until successive values of
    ``lam`` differ by less than ``epsilon`` (absolute, or relative to the
    previous value) or ``max_iters`` outer iterations have run.  An
    ``aitken`` iteration costs two evaluations of :func:`lambda_step`.
    Non-convergence is reported through ``converged=False``; degenerate
    classes raise.
    """
    opts = opts or OptimOptions()
    s, h, yty = _cls(basis, k)
    eps = opts.epsilon
    method = opts.method
    t_start = time.perf_counter()

    def record(it, lam):
        return TraceRecord(it, lam, log_evidence_1d(basis, k, lam),
                           (time.perf_counter() - t_start) * 1e3)

    lam = float(opts.lambda_init)
    trace = [record(0, lam)]
    fallbacks = 0
    evals = 0
    converged = False
    it = 0
    state = None
    if method in ("fixed_point_ab", "em"):
        beta = beta_of_lambda(basis, k, lam)
        state = HyperparamState.from_ab(lam * beta, beta)
        step = fixed_point_step_ab if method == "fixed_point_ab" else em_step

    while it < opts.max_iters:
        it += 1
        lam0 = lam
        if method == "aitken":
            l1 = lambda_step(basis, k, lam0)
            l2 = lambda_step(basis, k, l1)
            evals += 2
            lam, fb = aitken_extrapolate(lam0, l1, l2)
            if not fb and opts.aitken_guard and (lam - lam0) * (l1 - lam0) < 0:
                # locally expanding map: the secant meets the diagonal behind lam0
                lam, fb = l2, True
            if not fb and not _admissible(s, h, yty, lam):
                lam, fb = l2, True
            fallbacks += fb
        elif method == "lambda_plain":
            lam = lambda_step(basis, k, lam0)
            evals += 1
        else:
            state = step(basis, k, state)
            lam = state.lam
            evals += 1
        if not (math.isfinite(lam) and 0.0 < lam < LAMBDA_CEILING):
            log.warning("class %d: %s iterate left (0, %g) at iteration %d", k, method, LAMBDA_CEILING, it)
            lam = lam0
            break
        trace.append(record(it, lam))
        if _done(lam, lam0, eps):
            converged = True
            break

    beta = beta_of_lambda(basis, k, lam)
    final = HyperparamState(
        alpha=lam * beta,
        beta=beta,
        lam=lam,
        gamma=gamma_of(s, lam),
        log_evidence=trace[-1].log_evidence if trace[-1].lam == lam else log_evidence_1d(basis, k, lam),
    )
    if not converged:
        log.warning("class %d: %s did not converge in %d iterations (lambda=%g)", k, method, it, lam)
    return EvidenceResult(
        class_index=k,
        state=final,
        iterations=it,
        converged=converged,
        trace=tuple(trace),
        fallback_count=fallbacks,
        evaluations=evals,
        method=method,
    )


def _admissible(s, h, yty, lam):
    return yty - np.sum(h * h / (lam + s)) > DEGENERATE_TOL * yty


def asymptotic_slope(bank: FeatureBank, y) -> SlopeCheck:
    """Limit of ``f(lam) / lam`` as ``lam -> inf`` for the 1-D update map.

    A slope below one guarantees a fixed point exists.  At or above one a
    :class:`FixedPointConditionWarning` is issued and returned as text.
    """
    x = bank.data
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != bank.n:
        raise DataError(f"label vector has {y.shape[0]} entries, bank has {bank.n} samples")
    if not np.any(y):
        raise DegenerateClassError("label vector is all zero")
    xy = x @ y
    xy2 = float(np.dot(xy, xy))
    if xy2 == 0.0:
        raise DegenerateClassError("X y = 0: no signal for this class")
    slope = float(np.dot(y, y)) * float(np.sum(x * x)) / (bank.n * xy2)
    msg = None
    if slope >= 1.0:
        msg = f"asymptotic slope {slope:.6g} >= 1: existence of a fixed point is not certified"
        warnings.warn(msg, FixedPointConditionWarning, stacklevel=2)
    return SlopeCheck(slope, msg)
