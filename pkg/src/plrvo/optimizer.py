"""Constrained maximization of the clip-to-distortion ratio
J(k, theta, C) = C * (k - 1) * theta over the gamma-seed noise family.

Constraints:

  c0   clip_min <= C <= clip_max (user-supplied bounds)
  c1   Gamma CDF at inverse-scale 0.1 is ~0 (suppresses scales b > 10)
  c2   accounted epsilon(delta*) <= epsilon*
  c3   k > 1 (finite expected per-coordinate error)
  c4   (k - 1) * theta >= 1 / distortion_cap (caps distortion)
  mgf  lambda_max * C * theta < 1 (every accountant MGF argument exists)

The search is deterministic and derivative-free. Phase A finds the exact
feasible argmax of J over a logarithmic (k, theta) x linear C grid, walking
each clip slice with a monotone staircase so the privacy constraint is
evaluated only near its own boundary. Phase B refines with coordinate-wise
golden section along the feasibility boundary (each k or C probe snaps
theta to its largest feasible value, so every probe is feasibility-checked)
until the relative J improvement drops below 1e-4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .accountant import account
from .numerics import regularized_lower_gamma
from .params import (
    AccountingJob,
    GammaPlrvParams,
    OptimizationResult,
    PrivacyTarget,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

K_GRID_LO, K_GRID_HI, K_GRID_POINTS = 1.0 + 1e-3, 1e6, 60
THETA_GRID_LO, THETA_GRID_POINTS = 1e-7, 60
C_GRID_POINTS = 8


class NegativeDiscriminant(ArithmeticError):
    """The closed-form shape-parameter interval is empty."""


class InfeasibleError(RuntimeError):
    """No point in the configured box satisfies every constraint."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class FeasibilityConfig:
    """Search box and tolerances for :func:`solve`.

    ``job_skeleton`` supplies (T, zeta, N, delta, lambda_max); its clip value
    is ignored and replaced by each candidate C. ``gamma_cdf_tol``
    operationalizes the "approximately zero" Gamma CDF in c1;
    ``distortion_cap`` is c4's ceiling on 1 / ((k-1) * theta).
    """

    clip_min: float
    clip_max: float
    target: PrivacyTarget
    job_skeleton: AccountingJob
    gamma_cdf_tol: float = 1e-6
    distortion_cap: float = 10.0

    def __post_init__(self):
        if not 0 < self.clip_min <= self.clip_max:
            raise ValueError(
                f"need 0 < clip_min <= clip_max, got [{self.clip_min}, {self.clip_max}]")
        if not 0.0 < self.gamma_cdf_tol < 1.0:
            raise ValueError(f"gamma_cdf_tol must be in (0, 1), got {self.gamma_cdf_tol}")
        if not self.distortion_cap > 0:
            raise ValueError(f"distortion_cap must be > 0, got {self.distortion_cap}")

    def job_for(self, clip_C: float) -> AccountingJob:
        return replace(self.job_skeleton, clip_C=clip_C)


def objective(k: float, theta: float, C: float) -> float:
    return C * (k - 1.0) * theta


def _cheap_constraints(k: float, theta: float, C: float,
                       cfg: FeasibilityConfig) -> dict[str, dict]:
    """Every constraint except the accountant-backed c2."""
    report: dict[str, dict] = {}
    m0 = min(C - cfg.clip_min, cfg.clip_max - C)
    report["c0"] = {"passed": m0 >= 0.0, "margin": m0}
    report["c3"] = {"passed": k > 1.0, "margin": k - 1.0}
    if k > 1.0:
        cdf = regularized_lower_gamma(k, 0.1 / theta)
        report["c1"] = {"passed": cdf <= cfg.gamma_cdf_tol, "margin": cfg.gamma_cdf_tol - cdf}
        m4 = (k - 1.0) * theta - 1.0 / cfg.distortion_cap
        report["c4"] = {"passed": m4 >= 0.0, "margin": m4}
    else:
        cdf = regularized_lower_gamma(max(k, 1e-12), 0.1 / theta)
        report["c1"] = {"passed": cdf <= cfg.gamma_cdf_tol, "margin": cfg.gamma_cdf_tol - cdf}
        report["c4"] = {"passed": False, "margin": -math.inf}
    m_mgf = 1.0 - cfg.job_skeleton.lambda_max * C * theta
    report["mgf"] = {"passed": m_mgf > 0.0, "margin": m_mgf}
    return report


def check_feasible(point: tuple[float, float, float], cfg: FeasibilityConfig,
                   lambda_search: str = "full",
                   threads: int | None = None) -> dict[str, dict]:
    """Full constraint report with signed margins at (k, theta, C).

    Infeasibility is data, not an exception: every constraint is reported.
    c2 carries the accounted epsilon when the MGF constraint allows
    evaluating it.
    """
    k, theta, C = point
    if not (k > 0 and theta > 0 and C > 0):
        return {name: {"passed": False, "margin": -math.inf}
                for name in ("c0", "c1", "c2", "c3", "c4", "mgf")}
    report = _cheap_constraints(k, theta, C, cfg)
    if report["mgf"]["passed"] and report["c0"]["passed"]:
        res = account(GammaPlrvParams(k=k, theta=theta), cfg.job_for(C),
                      lambda_search=lambda_search, threads=threads)
        eps = res.epsilon
        report["c2"] = {"passed": eps <= cfg.target.epsilon_star,
                        "margin": cfg.target.epsilon_star - eps,
                        "epsilon": eps}
    else:
        report["c2"] = {"passed": False, "margin": -math.inf, "epsilon": None}
    return report


def all_pass(report: dict[str, dict]) -> bool:
    return all(entry["passed"] for entry in report.values())


def gamma_plrv_k_bounds(C: float, theta: float, eta: int) -> tuple[float, float]:
    """Closed-form shape-parameter interval for one moment index.

    Roots of A k^2 - 4 L k - 2.7734375 = 0 with A = C^2 theta^2 (eta - eta^2)
    and L = log(1 - C theta (eta - 1)); returned ascending. Raises a domain
    error when the log argument is nonpositive and
    :class:`NegativeDiscriminant` when the interval is empty.
    """
    if eta < 2:
        raise ValueError(f"eta must be >= 2, got {eta}")
    log_arg = 1.0 - C * theta * (eta - 1.0)
    if log_arg <= 0.0:
        raise ValueError(
            f"log argument 1 - C*theta*(eta-1) = {log_arg:.6g} <= 0 at eta = {eta}")
    L = math.log(log_arg)
    A = C * C * theta * theta * (eta - eta * eta)
    disc = 16.0 * L * L + 11.09375 * A
    if disc < 0.0:
        raise NegativeDiscriminant(
            f"discriminant {disc:.6g} < 0 at (C={C}, theta={theta}, eta={eta})")
    sq = math.sqrt(disc)
    k_a = (4.0 * L - sq) / (2.0 * A)
    k_b = (4.0 * L + sq) / (2.0 * A)
    return (k_a, k_b) if k_a <= k_b else (k_b, k_a)


def gamma_plrv_k_interval(C: float, theta: float, lambda_max: int) -> tuple[float, float] | None:
    """Intersection of the closed-form intervals over eta <= lambda_max + 1,
    or None when empty. Optional pre-filter only; check_feasible is the
    authoritative test."""
    lo, hi = -math.inf, math.inf
    for eta in range(2, lambda_max + 2):
        try:
            k1, k2 = gamma_plrv_k_bounds(C, theta, eta)
        except (ValueError, NegativeDiscriminant):
            return None
        lo, hi = max(lo, k1), min(hi, k2)
        if lo > hi:
            return None
    return lo, hi


@dataclass
class _SearchState:
    cfg: FeasibilityConfig
    threads: int | None = None
    c2_cache: dict[tuple[float, float, float], dict] = field(default_factory=dict)

    def c2_entry(self, point: tuple[float, float, float]) -> dict:
        if point not in self.c2_cache:
            k, theta, C = point
            res = account(GammaPlrvParams(k=k, theta=theta), self.cfg.job_for(C),
                          lambda_search="coarse", threads=self.threads)
            self.c2_cache[point] = {
                "passed": res.epsilon <= self.cfg.target.epsilon_star,
                "margin": self.cfg.target.epsilon_star - res.epsilon,
                "epsilon": res.epsilon,
            }
        return self.c2_cache[point]


def _cheap_theta_floor(k: float, thetas: np.ndarray,
                       cfg: FeasibilityConfig) -> int | None:
    """Smallest index into the ascending theta grid passing c1 and c4 at this
    k, or None when the whole column is cheap-infeasible. Both constraints
    impose lower bounds on theta (the gamma tail and the distortion cap both
    relax as theta grows), so the feasible set is a contiguous suffix; c1's
    boundary is found by bisection on its monotone CDF."""
    if not k > 1.0:
        return None
    bot = int(np.searchsorted(thetas, 1.0 / (cfg.distortion_cap * (k - 1.0)), side="left"))
    if bot >= len(thetas):
        return None
    lo, hi = bot, len(thetas)
    if regularized_lower_gamma(k, 0.1 / float(thetas[lo])) <= cfg.gamma_cdf_tol:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if regularized_lower_gamma(k, 0.1 / float(thetas[mid])) <= cfg.gamma_cdf_tol:
            hi = mid
        else:
            lo = mid
    return hi if hi < len(thetas) else None


def _grid(cfg: FeasibilityConfig) -> list[tuple[float, float, float]]:
    ks = np.geomspace(K_GRID_LO, K_GRID_HI, K_GRID_POINTS)
    if cfg.clip_min == cfg.clip_max:
        cs = np.array([cfg.clip_min])
    else:
        cs = np.linspace(cfg.clip_min, cfg.clip_max, C_GRID_POINTS)
    points = []
    lam_next = cfg.job_skeleton.lambda_max + 1
    for C in cs:
        theta_hi = (1.0 - 1e-6) / (C * lam_next)
        if theta_hi <= THETA_GRID_LO:
            continue
        for theta in np.geomspace(THETA_GRID_LO, theta_hi, THETA_GRID_POINTS):
            for k in ks:
                points.append((float(k), float(theta), float(C)))
    return points


def _golden_max(f, lo: float, hi: float, log_space: bool,
                iters: int = 20) -> tuple[float, float]:
    """Golden-section maximization of f over [lo, hi]; f may return -inf.

    Returns the best probed (x, f(x)) including the endpoints.
    """

    def transform(t):
        return math.exp(t) if log_space else t

    a = math.log(lo) if log_space else lo
    b = math.log(hi) if log_space else hi
    best_x, best_f = None, -math.inf

    def evaluate(t):
        nonlocal best_x, best_f
        x = transform(t)
        val = f(x)
        if val > best_f:
            best_f, best_x = val, x
        return val

    evaluate(a)
    evaluate(b)
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = evaluate(x1), evaluate(x2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = evaluate(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = evaluate(x1)
        if abs(b - a) <= 1e-7 * max(1.0, abs(a) + abs(b)):
            break
    return best_x, best_f


def _c1_theta_floor(k: float, theta_hi: float, cfg: FeasibilityConfig) -> float:
    """Smallest theta whose gamma tail passes c1, by bisection on the
    monotone CDF; returns above theta_hi when the whole range fails."""
    if regularized_lower_gamma(k, 0.1 / theta_hi) > cfg.gamma_cdf_tol:
        return theta_hi * 2.0
    lo, hi = math.log(1e-12), math.log(theta_hi)
    if regularized_lower_gamma(k, 0.1 / 1e-12) <= cfg.gamma_cdf_tol:
        return 1e-12
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if regularized_lower_gamma(k, 0.1 / math.exp(mid)) <= cfg.gamma_cdf_tol:
            hi = mid
        else:
            lo = mid
    return math.exp(hi)


def _boundary_theta(state: _SearchState, k: float, C: float) -> tuple[float, float] | None:
    """Largest feasible theta at (k, C) with all constraints, or None.

    The accounted epsilon is monotone increasing in theta while c1 and c4
    are lower bounds, so the feasible thetas form an interval whose top is
    either the MGF bound or the c2 boundary; the latter is bisected in log
    space. Returns (theta, J)."""
    cfg = state.cfg
    if not (k > 1.0 and cfg.clip_min <= C <= cfg.clip_max):
        return None
    theta_hi = (1.0 - 1e-6) / (C * (cfg.job_skeleton.lambda_max + 1))
    floor = max(1.0 / (cfg.distortion_cap * (k - 1.0)),
                _c1_theta_floor(k, theta_hi, cfg))
    if floor > theta_hi:
        return None
    if state.c2_entry((k, theta_hi, C))["passed"]:
        return theta_hi, objective(k, theta_hi, C)
    if not state.c2_entry((k, floor, C))["passed"]:
        return None
    lo, hi = math.log(floor), math.log(theta_hi)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if state.c2_entry((k, math.exp(mid), C))["passed"]:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-7:
            break
    theta = math.exp(lo)
    return theta, objective(k, theta, C)


def _infeasibility_diagnostics(cfg: FeasibilityConfig, state: _SearchState,
                               grid: list[tuple[float, float, float]]) -> dict:
    """Per-clip-value summary of the tightest violated constraint."""
    by_clip: dict[float, dict] = {}
    for point in grid:
        k, theta, C = point
        report = _cheap_constraints(k, theta, C, cfg)
        cached = state.c2_cache.get(point)
        if cached is not None:
            report["c2"] = cached
        failing = {n: e for n, e in report.items() if not e["passed"]}
        if not failing:
            failing = {"c2": {"margin": -math.inf}}
        tightest = max(failing.items(), key=lambda kv: kv[1]["margin"])
        entry = by_clip.setdefault(C, {"constraint": tightest[0],
                                       "margin": tightest[1]["margin"]})
        if tightest[1]["margin"] > entry["margin"]:
            entry["constraint"], entry["margin"] = tightest[0], tightest[1]["margin"]
    return {f"clip={c:g}": v for c, v in sorted(by_clip.items())}


def solve(cfg: FeasibilityConfig, threads: int | None = None) -> OptimizationResult:
    """Two-phase deterministic search for the feasible J maximum.

    Phase A computes the exact feasible grid argmax of J (60 log points in
    k, 60 log points in theta per clip, 8 clips); Phase B refines it by
    boundary-following coordinate golden section until the relative J
    improvement drops below 1e-4. The returned point is re-verified with the
    full lambda grid; its diagnostics are embedded in the result. No
    randomness anywhere. The closed-form shape interval
    (:func:`gamma_plrv_k_interval`) is available as an external pre-filter
    for candidate generation; the authoritative test is
    :func:`check_feasible`, which this search applies throughout.
    """
    state = _SearchState(cfg=cfg, threads=threads)

    # The accounted epsilon is monotone in k, theta, and C: the mechanism
    # kernel increases with the inverse scale u, Gamma(k, theta) is
    # stochastically increasing in both parameters, and clip monotonicity
    # covers C. For fixed (k, C) the c2-feasible thetas are therefore a
    # prefix of the grid whose end theta*(k) is nonincreasing in k, so an
    # ascending-k walk with a descending theta pointer locates every
    # column's exact boundary in amortized O(#k + #theta) accountant calls.
    # Columns whose J even at the pointer cannot beat the incumbent are
    # skipped without evaluation. The outcome is exactly the feasible grid
    # argmax of J.
    ks = np.geomspace(K_GRID_LO, K_GRID_HI, K_GRID_POINTS)
    if cfg.clip_min == cfg.clip_max:
        cs = np.array([cfg.clip_min])
    else:
        cs = np.linspace(cfg.clip_min, cfg.clip_max, C_GRID_POINTS)
    lam_next = cfg.job_skeleton.lambda_max + 1

    best = None
    best_j = -math.inf
    for C in (float(c) for c in cs):
        theta_hi = (1.0 - 1e-6) / (C * lam_next)
        if theta_hi <= THETA_GRID_LO:
            continue
        thetas = np.geomspace(THETA_GRID_LO, theta_hi, THETA_GRID_POINTS)
        pointer = len(thetas) - 1
        for k in (float(v) for v in ks):
            if pointer < 0:
                break
            if objective(k, float(thetas[pointer]), C) <= best_j:
                continue
            bot = _cheap_theta_floor(k, thetas, cfg)
            if bot is None:
                continue
            q = pointer
            if q < bot:
                continue
            while q >= bot and not state.c2_entry((k, float(thetas[q]), C))["passed"]:
                q -= 1
            if q < bot:
                pointer = bot - 1
                continue
            pointer = q
            j = objective(k, float(thetas[q]), C)
            if j > best_j:
                best, best_j = (k, float(thetas[q]), C), j
    if best is None:
        raise InfeasibleError(
            "no feasible point in the configured box",
            diagnostics=_infeasibility_diagnostics(cfg, state, _grid(cfg)))

    # Phase B: coordinate-wise golden-section along the feasibility boundary.
    # A probe at k (or C) evaluates J with theta snapped to its largest
    # feasible value - every probe is feasibility-checked - because at the
    # privacy boundary no single raw-coordinate move can improve J (raising
    # k or C alone violates c2; lowering theta alone lowers J). The k bracket
    # widens whenever the line search lands on its edge, so slow climbs
    # toward the large-k asymptote converge in a few passes.
    k_ratio = (K_GRID_HI / K_GRID_LO) ** (1.0 / (K_GRID_POINTS - 1))
    k_best, theta_best, c_best = best
    snapped = _boundary_theta(state, k_best, c_best)
    if snapped is not None and snapped[1] > best_j:
        theta_best, best_j = snapped[0], snapped[1]
    k_span = k_ratio
    for _ in range(12):
        prev_j = best_j

        def j_at_k(k: float) -> float:
            r = _boundary_theta(state, k, c_best)
            return r[1] if r is not None else -math.inf

        lo = max(K_GRID_LO, k_best / k_span)
        hi = min(K_GRID_HI, k_best * k_span)
        k_probe, j_probe = _golden_max(j_at_k, lo, hi, log_space=True)
        if j_probe > best_j:
            k_best, best_j = k_probe, j_probe
            theta_best = _boundary_theta(state, k_best, c_best)[0]
        edge = (k_probe >= hi * 0.99 and hi < K_GRID_HI) or \
               (k_probe <= lo * 1.01 and lo > K_GRID_LO)
        k_span = min(k_span * k_span, 1e4) if edge else k_ratio

        if cfg.clip_max > cfg.clip_min:

            def j_at_c(C: float) -> float:
                r = _boundary_theta(state, k_best, C)
                return r[1] if r is not None else -math.inf

            c_probe, j_probe = _golden_max(j_at_c, cfg.clip_min, cfg.clip_max,
                                           log_space=False)
            if j_probe > best_j:
                c_best, best_j = c_probe, j_probe
                theta_best = _boundary_theta(state, k_best, c_best)[0]

        if best_j - prev_j < 1e-4 * max(prev_j, 1e-300):
            break
    best = (k_best, theta_best, c_best)

    final_report = check_feasible(best, cfg, lambda_search="full", threads=threads)
    if not all_pass(final_report):
        # the coarse-lambda epsilon upper-bounds the full-grid one, so this
        # can only trip if a non-c2 constraint was violated, i.e. a bug
        raise InfeasibleError("refined point failed final verification",
                              diagnostics=final_report)
    k, theta, C = best
    return OptimizationResult(
        k_star=k,
        theta_star=theta,
        C_star=C,
        achieved_epsilon=final_report["c2"]["epsilon"],
        achieved_distortion=1.0 / ((k - 1.0) * theta),
        snr=objective(k, theta, C),
        constraint_report=final_report,
    )
