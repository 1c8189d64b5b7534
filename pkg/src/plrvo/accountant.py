"""Per-step log moments for the three mechanisms, composition over steps,
and conversion to (epsilon, delta).

The subsampled moment of order lambda is a binomial mixture over an index
eta in [0, lambda + 1]:

    alpha(lambda) = log sum_eta  C(lambda+1, eta) (1-zeta)^(lambda+1-eta)
                                 zeta^eta  K(x, eta)

where the kernel K is mechanism specific. For a fixed-scale Laplace
mechanism the kernel's two branches are plain exponentials in x/b; for the
gamma-seed randomized-scale family each exponential is replaced by the seed
MGF evaluated at the same argument. Both share the branch coefficients
eta/(2*eta-1) and (eta-1)/(2*eta-1); the degenerate eta = 0 and eta = 1
branches carry coefficient zero and are represented as absent log terms
(log-zero), never as log(0).

Everything is computed in log space. The multivariate (per-model-coordinate)
sum streams the majorization set lazily in fixed-size chunks; chunk partial
sums are combined by a fixed pairwise tree keyed on chunk index, so results
are bitwise identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .majorization import MajorizationSet
from .numerics import LOG_ZERO, log_binomial
from .params import (
    AccountingJob,
    GammaPlrvParams,
    GaussianParams,
    LaplaceParams,
    LogMomentCurve,
    MgfDomainViolation,
    effective_lambda_max,
    validate,
)

_CHUNK_TARGET_ELEMENTS = 8_000_000  # per-chunk eta-by-x workspace budget


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit argument, then PLRV_THREADS, then cpu count."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("PLRV_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def branch_coefficients(eta: int) -> tuple[float, float]:
    """(b1, b2) mixture weights of the two kernel branches.

    Evaluated symbolically at the degenerate indices so (2*eta - 1) is never
    used as a divisor where a branch is absent: eta = 0 -> (0, 1) and
    eta = 1 -> (1, 0).
    """
    if eta == 0:
        return 0.0, 1.0
    if eta == 1:
        return 1.0, 0.0
    d = 2.0 * eta - 1.0
    return eta / d, (eta - 1.0) / d


@dataclass(frozen=True)
class MomentTermContext:
    """One eta term of the binomial mixture at evaluation point x."""

    eta: int
    b1: float
    b2: float
    a1: float  # MGF / exponential argument of the first branch, (eta-1) * x
    a2: float  # second branch, -eta * x

    @classmethod
    def at(cls, eta: int, x: float) -> "MomentTermContext":
        b1, b2 = branch_coefficients(eta)
        return cls(eta=eta, b1=b1, b2=b2, a1=(eta - 1.0) * x, a2=-eta * x)


def gamma_mgf_log(params: GammaPlrvParams, t: float) -> float:
    """log M_u(t) = -k * log(1 - t * theta), defined for t * theta < 1."""
    arg = t * params.theta
    if arg >= 1.0:
        raise MgfDomainViolation(
            f"gamma-seed MGF undefined at t = {t} (t * theta = {arg:.6g} >= 1)")
    return -params.k * math.log1p(-arg)


def plrv_g_term(params: GammaPlrvParams, x: float, eta: int) -> float:
    """Linear-space kernel of the gamma-seed mechanism at (x, eta).

    Exactly 1 at eta in {0, 1}: the absent branch has coefficient zero and
    the surviving branch's MGF argument is zero.
    """
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    ctx = MomentTermContext.at(eta, x)
    if eta == 0 or eta == 1:
        return 1.0
    return (ctx.b1 * math.exp(gamma_mgf_log(params, ctx.a1))
            + ctx.b2 * math.exp(gamma_mgf_log(params, ctx.a2)))


def _log_subsample_weights(zeta: float, lam: int) -> np.ndarray:
    """log of C(lam+1, eta) (1-zeta)^(lam+1-eta) zeta^eta for eta = 0..lam+1.

    Vanishing weights at zeta = 0 or 1 are exact -inf entries, never log(0).
    """
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"zeta must be in [0, 1], got {zeta}")
    n = lam + 1
    out = np.full(n + 1, LOG_ZERO)
    if zeta == 0.0:
        out[0] = 0.0
        return out
    if zeta == 1.0:
        out[n] = 0.0
        return out
    log_z = math.log(zeta)
    log_1mz = math.log1p(-zeta)
    for eta in range(n + 1):
        out[eta] = log_binomial(n, eta) + (n - eta) * log_1mz + eta * log_z
    return out


# A branch function maps (x_vector, eta_column) -> (lm1, lm2): matrices of
# the log values of the two kernel branches before mixing, shaped
# (n_eta, n_x). eta rows 0 and 1 are ignored by the caller (their branch
# coefficients vanish).
BranchFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def _plrv_branches(params: GammaPlrvParams) -> BranchFn:
    k, theta = params.k, params.theta

    def branches(x: np.ndarray, etas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        worst = (float(etas[-1]) - 1.0) * theta * float(np.max(x))
        if worst >= 1.0:
            raise MgfDomainViolation(
                f"gamma-seed MGF undefined at eta = {int(etas[-1])}: "
                f"(eta-1) * theta * x reaches {worst:.6g} >= 1"
            )
        lm1 = -k * np.log1p(-(etas[:, None] - 1.0) * theta * x[None, :])
        lm2 = -k * np.log1p(etas[:, None] * theta * x[None, :])
        return lm1, lm2

    return branches


def _laplace_branches(params: LaplaceParams) -> BranchFn:
    inv_b = 1.0 / params.b

    def branches(x: np.ndarray, etas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        scaled = inv_b * x[None, :]
        return (etas[:, None] - 1.0) * scaled, -etas[:, None] * scaled

    return branches


def _per_coordinate_log_moments(branches: BranchFn, x: np.ndarray, zeta: float,
                                lambdas: Sequence[int]) -> dict[int, np.ndarray]:
    """Vector of per-coordinate log moments for each requested order.

    The kernel values depend on eta only, so they are computed once as an
    (eta, x) matrix shared by all requested lambdas; each lambda then
    log-sum-exps its weighted eta slice. Values are floored at zero (the
    true moments are >= 1 in linear space; x coordinates are sorted
    descending, so the largest MGF argument sits at [last eta, first x]).
    """
    x = np.asarray(x, dtype=np.float64)
    lambdas = sorted(set(int(l) for l in lambdas))
    if not lambdas or lambdas[0] < 1:
        raise ValueError(f"moment orders must be positive integers, got {lambdas}")
    eta_max = lambdas[-1] + 1

    log_g = np.zeros((eta_max + 1, x.size))
    if eta_max >= 2:
        etas = np.arange(2, eta_max + 1, dtype=np.float64)
        b1 = etas / (2.0 * etas - 1.0)
        b2 = (etas - 1.0) / (2.0 * etas - 1.0)
        lm1, lm2 = branches(x, etas)
        lm1 += np.log(b1)[:, None]
        lm2 += np.log(b2)[:, None]
        # logaddexp via max + log1p(exp(-|diff|)): keeps the loop in SIMD code
        hi = np.maximum(lm1, lm2)
        np.abs(lm1 - lm2, out=lm1)
        log_g[2:] = hi + np.log1p(np.exp(-lm1))

    out = {}
    for lam in lambdas:
        log_w = _log_subsample_weights(zeta, lam)
        live = log_w != LOG_ZERO
        t = log_w[live, None] + log_g[: lam + 2][live]
        m = t.max(axis=0)
        alpha = m + np.log(np.sum(np.exp(t - m[None, :]), axis=0))
        out[lam] = np.maximum(alpha, 0.0)
    return out


def plrv_univariate_log_moment(params: GammaPlrvParams, x: float, zeta: float,
                               lam: int) -> float:
    """Order-lambda log moment of the subsampled gamma-seed mechanism applied
    to a single coordinate bounded by x."""
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if lam * x * params.theta >= 1.0:
        raise MgfDomainViolation(
            f"lambda * x * theta = {lam * x * params.theta:.6g} >= 1",
            max_admissible_lambda=int(math.floor(1.0 / (x * params.theta))) - 1,
        )
    vec = _per_coordinate_log_moments(_plrv_branches(params), np.array([x]), zeta, [lam])
    return float(vec[lam][0])


def laplace_univariate_log_moment(params: LaplaceParams, x: float, zeta: float,
                                  lam: int) -> float:
    """Order-lambda log moment of the subsampled fixed-scale Laplace mechanism
    on a single coordinate bounded by x."""
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    vec = _per_coordinate_log_moments(_laplace_branches(params), np.array([x]), zeta, [lam])
    return float(vec[lam][0])


def gaussian_subsampled_log_moment(params: GaussianParams, zeta: float, lam: int) -> float:
    """Per-step log moment of the subsampled Gaussian mechanism: the binomial
    mixture with kernel exp((eta^2 - eta) / (2 sigma^2))."""
    log_w = _log_subsample_weights(zeta, lam)
    inv_2s2 = 1.0 / (2.0 * params.sigma * params.sigma)
    terms = [log_w[eta] + (eta * eta - eta) * inv_2s2
             for eta in range(lam + 2) if log_w[eta] != LOG_ZERO]
    m = max(terms)
    return max(0.0, m + math.log(sum(math.exp(t - m) for t in terms)))


def _pairwise_tree_sum(values: list[float]) -> float:
    """Sum by a fixed balanced pairwise tree; independent of who computed
    the leaves, so thread counts cannot change the result."""
    vals = list(values)
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def _fixed_chunks(n: int, chunk: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk - 1, n)) for lo in range(1, n + 1, chunk)]


def _multivariate_log_moments(branches: BranchFn, job: AccountingJob,
                              lambdas: Sequence[int],
                              threads: int | None = None) -> dict[int, float]:
    """Sum of per-coordinate log moments over the majorization set
    x_i = C (sqrt(i) - sqrt(i-1)), i = 1..N, for each requested order.

    Chunk boundaries are fixed (independent of worker count); each chunk is
    summed by numpy's deterministic pairwise reduction and chunks combine
    through a fixed tree, so the result is bitwise reproducible.
    """
    lambdas = sorted(set(int(l) for l in lambdas))
    zeta = job.sampling_rate_zeta
    mset = MajorizationSet(job.clip_C, job.model_dim_N)
    n_eta = lambdas[-1] + 2
    chunk = max(4096, min(1 << 16, _CHUNK_TARGET_ELEMENTS // n_eta))
    ranges = _fixed_chunks(job.model_dim_N, chunk)

    def chunk_sums(r: tuple[int, int]) -> dict[int, float]:
        xs = mset.coordinates(r[0], r[1])
        per = _per_coordinate_log_moments(branches, xs, zeta, lambdas)
        return {lam: float(np.sum(v)) for lam, v in per.items()}

    workers = resolve_threads(threads)
    if workers == 1 or len(ranges) == 1:
        partials = [chunk_sums(r) for r in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(chunk_sums, ranges))

    return {lam: _pairwise_tree_sum([p[lam] for p in partials]) for lam in lambdas}


def plrv_multivariate_log_moments(params: GammaPlrvParams, job: AccountingJob,
                                  lambdas: Sequence[int],
                                  threads: int | None = None) -> dict[int, float]:
    """Batch form of :func:`plrv_multivariate_log_moment` (shared kernel work
    across orders; used by the lambda searches)."""
    validate(job, params)
    return _multivariate_log_moments(_plrv_branches(params), job, lambdas, threads)


def plrv_multivariate_log_moment(params: GammaPlrvParams, job: AccountingJob,
                                 lam: int, threads: int | None = None) -> float:
    """Per-step alpha(lambda) of the gamma-seed mechanism on an l2-clipped
    model of N coordinates, via the majorization set."""
    return plrv_multivariate_log_moments(params, job, [lam], threads)[lam]


def laplace_multivariate_log_moments(params: LaplaceParams, job: AccountingJob,
                                     lambdas: Sequence[int],
                                     threads: int | None = None) -> dict[int, float]:
    return _multivariate_log_moments(_laplace_branches(params), job, lambdas, threads)


def laplace_multivariate_log_moment(params: LaplaceParams, job: AccountingJob,
                                    lam: int, threads: int | None = None) -> float:
    """Per-step alpha(lambda) of the fixed-scale Laplace mechanism on an
    l2-clipped model of N coordinates, via the majorization set."""
    return laplace_multivariate_log_moments(params, job, [lam], threads)[lam]


def laplace_privacy_loss_bound(params: LaplaceParams, clip_C: float) -> float:
    """Pure privacy-loss bound C / b of an unsampled Laplace mechanism with
    l1-clipped sensitivity C."""
    if clip_C < 0:
        raise ValueError(f"clip_C must be >= 0, got {clip_C}")
    return clip_C / params.b


def compose(curve: LogMomentCurve, steps_T: int) -> LogMomentCurve:
    """Additive composition over steps: every log moment is multiplied by T."""
    if not (isinstance(steps_T, int) and steps_T >= 1):
        raise ValueError(f"steps_T must be a positive integer, got {steps_T}")
    job = dict(curve.job)
    job["composed_steps"] = job.get("composed_steps", 1) * steps_T
    return LogMomentCurve(
        mechanism=curve.mechanism,
        alpha_per_step={l: steps_T * a for l, a in curve.alpha_per_step.items()},
        job=job,
    )


def _conversion_term(alpha: float, lam: int, delta: float) -> float:
    return (alpha / lam + math.log(lam / (lam + 1.0))
            - (math.log(delta) + math.log(lam + 1.0)) / lam)


def epsilon_from_delta(curve: LogMomentCurve, delta: float) -> tuple[float, int]:
    """Tight conversion: minimize over the curve's integer moment grid.

    Ties break toward the smaller order. The curve must already be composed
    over steps (this function does not multiply by T).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    best_eps = math.inf
    best_lam = None
    for lam, alpha in curve.alpha_per_step.items():
        eps = _conversion_term(alpha, lam, delta)
        if eps < best_eps:
            best_eps, best_lam = eps, lam
    return best_eps, best_lam


def delta_from_epsilon(curve: LogMomentCurve, epsilon: float) -> float:
    """Tail-bound conversion: min over the grid of exp(alpha - lambda * eps),
    clamped to at most 1."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    best = min(curve.alpha_per_step[lam] - lam * epsilon for lam in curve.alpha_per_step)
    return min(1.0, math.exp(best))


def coarse_lambda_ladder(lambda_max: int) -> list[int]:
    """Powers of two up to the cap, plus the cap itself."""
    ladder = []
    lam = 1
    while lam <= lambda_max:
        ladder.append(lam)
        lam *= 2
    if ladder[-1] != lambda_max:
        ladder.append(lambda_max)
    return ladder


def minimize_epsilon_lazy(alpha_total_fn: Callable[[Sequence[int]], dict[int, float]],
                          lambda_max: int, delta: float) -> tuple[float, int, dict[int, float]]:
    """Coarse-to-fine minimization of the conversion over lambda.

    Evaluates a power-of-two ladder first, then densifies one octave on each
    side of the coarse argmin. ``alpha_total_fn`` receives a batch of orders
    and returns composed (total) log moments. Returns (epsilon, argmin,
    every alpha evaluated).
    """
    ladder = coarse_lambda_ladder(lambda_max)
    evaluated = dict(alpha_total_fn(ladder))
    eps0, lam0 = _grid_min(evaluated, delta)
    lo = max(1, lam0 // 2)
    hi = min(lambda_max, lam0 * 2)
    dense = [l for l in range(lo, hi + 1) if l not in evaluated]
    if dense:
        evaluated.update(alpha_total_fn(dense))
    eps, lam = _grid_min(evaluated, delta)
    return eps, lam, evaluated


def _grid_min(alphas: dict[int, float], delta: float) -> tuple[float, int]:
    best_eps, best_lam = math.inf, None
    for lam in sorted(alphas):
        eps = _conversion_term(alphas[lam], lam, delta)
        if eps < best_eps:
            best_eps, best_lam = eps, lam
    return best_eps, best_lam


# ---------------------------------------------------------------------------
# Job-level drivers

MechanismParams = GammaPlrvParams | GaussianParams | LaplaceParams

MECHANISM_TAGS = {
    GammaPlrvParams: "plrvo",
    GaussianParams: "gaussian",
    LaplaceParams: "laplace",
}


def per_step_alpha_batch(params: MechanismParams, job: AccountingJob,
                         lambdas: Sequence[int],
                         threads: int | None = None) -> dict[int, float]:
    """Per-step alpha(lambda) for a batch of orders, dispatched on mechanism."""
    if isinstance(params, GammaPlrvParams):
        return plrv_multivariate_log_moments(params, job, lambdas, threads)
    if isinstance(params, LaplaceParams):
        return laplace_multivariate_log_moments(params, job, lambdas, threads)
    if isinstance(params, GaussianParams):
        return {int(l): gaussian_subsampled_log_moment(params, job.sampling_rate_zeta, int(l))
                for l in lambdas}
    raise TypeError(f"unsupported mechanism params {type(params).__name__}")


def build_curve(params: MechanismParams, job: AccountingJob,
                lambdas: Iterable[int] | None = None,
                threads: int | None = None) -> LogMomentCurve:
    """Per-step log-moment curve on an explicit grid (default: every integer
    order up to the effective cap)."""
    if lambdas is None:
        gamma = params if isinstance(params, GammaPlrvParams) else None
        lambdas = range(1, effective_lambda_max(job, gamma) + 1)
    alphas = per_step_alpha_batch(params, job, list(lambdas), threads)
    return LogMomentCurve(
        mechanism=MECHANISM_TAGS[type(params)],
        alpha_per_step=alphas,
        job={
            "steps_T": job.steps_T,
            "sampling_rate_zeta": job.sampling_rate_zeta,
            "model_dim_N": job.model_dim_N,
            "clip_C": job.clip_C,
            "delta": job.delta,
            "lambda_max": job.lambda_max,
        },
    )


@dataclass(frozen=True)
class AccountResult:
    epsilon: float
    argmin_lambda: int
    per_step_alpha_at_argmin: float
    mode: str
    lambda_search: str
    accel_error_estimate: float | None = None

    def to_json_dict(self) -> dict:
        out = {
            "epsilon": self.epsilon,
            "argmin_lambda": self.argmin_lambda,
            "per_step_alpha_at_argmin": self.per_step_alpha_at_argmin,
            "mode": self.mode,
            "lambda_search": self.lambda_search,
        }
        if self.accel_error_estimate is not None:
            out["accel_error_estimate"] = self.accel_error_estimate
        return out


def account(params: MechanismParams, job: AccountingJob,
            lambda_search: str = "full", threads: int | None = None,
            mode: str = "exact") -> AccountResult:
    """End-to-end accounting: per-step moments, T-fold composition, tight
    conversion at the job's delta.

    ``lambda_search='full'`` evaluates every integer order up to the
    effective cap; ``'coarse'`` runs the coarse-to-fine search, evaluating
    only the ladder plus one octave around its argmin. Both agree on small
    jobs; the coarse mode exists for model-scale N.
    """
    if lambda_search not in ("full", "coarse"):
        raise ValueError(f"lambda_search must be 'full' or 'coarse', got {lambda_search}")
    if mode not in ("exact", "accelerated"):
        raise ValueError(f"mode must be 'exact' or 'accelerated', got {mode}")
    gamma = params if isinstance(params, GammaPlrvParams) else None
    lam_cap = effective_lambda_max(job, gamma)
    job_eff = job if lam_cap == job.lambda_max else AccountingJob(
        job.steps_T, job.sampling_rate_zeta, job.model_dim_N,
        job.clip_C, job.delta, lam_cap)
    if gamma is not None:
        validate(job_eff, gamma)

    per_step_cache: dict[int, float] = {}
    accel_errors: list[float] = []

    def total_batch(lams: Sequence[int]) -> dict[int, float]:
        missing = [l for l in lams if l not in per_step_cache]
        if missing:
            if mode == "accelerated" and isinstance(params, (GammaPlrvParams, LaplaceParams)):
                vals = {}
                for l in missing:
                    v, err = accelerated_multivariate_log_moment(params, job_eff, l, threads)
                    vals[l] = v
                    accel_errors.append(err)
            else:
                vals = per_step_alpha_batch(params, job_eff, missing, threads)
            per_step_cache.update(vals)
        return {l: job.steps_T * per_step_cache[l] for l in lams}

    if lambda_search == "full":
        totals = total_batch(list(range(1, lam_cap + 1)))
        eps, lam = _grid_min(totals, job.delta)
    else:
        eps, lam, _ = minimize_epsilon_lazy(total_batch, lam_cap, job.delta)
    return AccountResult(
        epsilon=eps,
        argmin_lambda=lam,
        per_step_alpha_at_argmin=per_step_cache[lam],
        mode=mode,
        lambda_search=lambda_search,
        accel_error_estimate=max(accel_errors) if accel_errors else None,
    )


# ---------------------------------------------------------------------------
# Accelerated multivariate mode (documented approximation; exact mode is
# authoritative and required by the acceptance suite)

_ACCEL_DENSE_HEAD = 1024


def _geometric_index_grid(n: int, ratio: float) -> np.ndarray:
    head = np.arange(1, min(_ACCEL_DENSE_HEAD, n) + 1, dtype=np.int64)
    if n <= _ACCEL_DENSE_HEAD:
        return head
    pts = [int(head[-1])]
    i = float(head[-1])
    while pts[-1] < n:
        i = max(i + 1.0, i * ratio)
        pts.append(min(int(math.floor(i)), n))
    return np.concatenate([head[:-1], np.asarray(pts, dtype=np.int64)])


def accelerated_multivariate_log_moment(params: GammaPlrvParams | LaplaceParams,
                                        job: AccountingJob, lam: int,
                                        threads: int | None = None,
                                        ratio: float = 1.01) -> tuple[float, float]:
    """Trapezoid-in-index approximation of the multivariate sum.

    The per-coordinate log moment decreases smoothly along the majorization
    set, so it is sampled on a geometric index grid (dense head, then ratio
    steps) and segment sums are approximated by trapezoids. Returns
    (value, error_estimate); the estimate is the exact difference for
    N <= 1e6 and a grid-refinement (ratio sqrt) comparison above that.
    """
    if isinstance(params, GammaPlrvParams):
        validate(job, params)
        branches = _plrv_branches(params)
    else:
        branches = _laplace_branches(params)

    def approx(r: float) -> float:
        idx = _geometric_index_grid(job.model_dim_N, r)
        xs = MajorizationSet(job.clip_C, job.model_dim_N).clip_C / (
            np.sqrt(idx.astype(np.float64)) + np.sqrt(idx.astype(np.float64) - 1.0))
        per = _per_coordinate_log_moments(branches, xs, job.sampling_rate_zeta, [lam])[lam]
        head = idx <= _ACCEL_DENSE_HEAD
        total = float(np.sum(per[head]))
        tail_idx = idx[~head]
        tail_val = per[~head]
        if tail_idx.size:
            a_idx = np.concatenate([[idx[head][-1]], tail_idx[:-1]])
            a_val = np.concatenate([[per[head][-1]], tail_val[:-1]])
            total += float(np.sum((tail_idx - a_idx) * 0.5 * (a_val + tail_val)))
        return total

    value = approx(ratio)
    if job.model_dim_N <= 1_000_000:
        exact = _multivariate_log_moments(branches, job, [lam], threads)[lam]
        return value, abs(value - exact)
    refined = approx(math.sqrt(ratio))
    return value, abs(value - refined)
