"""Lower-class integral tests, Chung-type liminf statistics, joint-event probes.

The integral test decides whether int (xi(t)/t^{H+theta})^{-1/beta}
phi(xi(t)/t^{H+theta}) dt/t converges at an endpoint.  In log-time
tau = |ln t| the relevant integrands decay like (ln tau)^a tau^{-c} with the
dichotomy sitting at c = 1, so partial domains are grown by *doubling tau*
(squaring t): increments then scale by 2^{1-c} per step and the local decay
exponent c_k = 1 - log2(I_{k+1}/I_k) separates convergent from divergent
tails cleanly.  Growing the domain geometrically in t itself would add
arithmetic tau-steps, whose increments decay only polynomially in k and
carry no usable signature.

The Chung statistic evaluates sup_{s<=t_k} |Y(s)| (ln ln adjusted)^beta
/ t_k^{H+theta} along dyadic times and tracks per-path running minima; a
liminf-type constant shows up as the stabilization of the running-min
distribution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .params import DerivedExponents, ProcessParams, derive
from .sampler import (
    discretized_cov,
    factorize,
    sample_gaussian,
    sup_statistic,
)
from .smallball import SmallBallEstimate, wilson_interval

__all__ = [
    "UnboundedRatioError",
    "ZeroHitsError",
    "IntegralTestSpec",
    "IntegralTestResult",
    "ChungSeries",
    "ProbeReport",
    "phi_model_exponential",
    "phi_model_from_estimates",
    "chung_boundary",
    "eval_integral_test",
    "chung_statistic",
    "maximal_inequality_probe",
]

E_E = math.exp(math.e)  # anchor separating the two endpoint regimes


class UnboundedRatioError(ValueError):
    """xi(t)/t^{H+theta} grows without bound: the test's precondition fails."""


class ZeroHitsError(RuntimeError):
    """A probability being estimated produced zero Monte Carlo hits."""


def phi_model_exponential(kappa: float, beta: float) -> Callable[[np.ndarray], np.ndarray]:
    """Analytic small-ball model phi(eps) = exp(-kappa eps^{-1/beta})."""
    if kappa <= 0 or beta <= 0:
        raise ValueError("kappa and beta must be positive")

    def phi(eps: np.ndarray) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        return np.exp(-kappa * eps ** (-1.0 / beta))

    return phi


def phi_model_from_estimates(estimates: list[SmallBallEstimate]) -> Callable[[np.ndarray], np.ndarray]:
    """Tabulated phi curve: log-log interpolation with power-law continuation.

    Inside the estimated eps range, log phi is interpolated linearly in
    log eps; outside, the boundary segments extrapolate (a power law for
    psi), which is the natural continuation of the fitted scaling.
    """
    pts = sorted((e for e in estimates if e.hits > 0), key=lambda e: e.epsilon)
    if len(pts) < 2:
        raise ValueError("need >= 2 estimates with hits to build a phi model")
    log_eps = np.array([math.log(e.epsilon) for e in pts])
    log_psi = np.array([math.log(-math.log(e.phat)) if 0 < e.phat < 1 else math.nan
                        for e in pts])
    if np.any(~np.isfinite(log_psi)):
        raise ValueError("phi model needs estimates strictly inside (0, 1)")

    def phi(eps: np.ndarray) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        le = np.log(eps)
        lp = np.interp(le, log_eps, log_psi)
        # linear continuation beyond the table (np.interp clamps; undo that)
        lo_slope = (log_psi[1] - log_psi[0]) / (log_eps[1] - log_eps[0])
        hi_slope = (log_psi[-1] - log_psi[-2]) / (log_eps[-1] - log_eps[-2])
        lp = np.where(le < log_eps[0], log_psi[0] + lo_slope * (le - log_eps[0]), lp)
        lp = np.where(le > log_eps[-1], log_psi[-1] + hi_slope * (le - log_eps[-1]), lp)
        return np.exp(-np.exp(lp))

    return phi


def chung_boundary(lam: float, hurst_plus_theta: float, beta: float) -> Callable[[np.ndarray], np.ndarray]:
    """Boundary family xi(t) = lam t^{H+theta} / (ln |ln t|)^beta."""

    def xi(t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return lam * t ** hurst_plus_theta / np.log(np.abs(np.log(t))) ** beta

    return xi


@dataclass
class IntegralTestSpec:
    """Inputs of the lower-class integral test.

    ``xi`` is the candidate boundary (nondecreasing, checked on samples),
    ``endpoint`` selects zero or infinity, ``phi_model`` maps the ratio
    xi(t)/t^{similarity_index} to a small-ball probability.  The similarity
    index is H + theta for the fractionally integrated process; it has to be
    carried here because the derived exponent pair (H, beta) does not
    determine it on its own.
    """

    xi: Callable[[np.ndarray], np.ndarray]
    endpoint: str
    phi_model: Callable[[np.ndarray], np.ndarray]
    similarity_index: float

    def __post_init__(self):
        if self.endpoint not in ("zero", "infinity"):
            raise ValueError(f"endpoint must be 'zero' or 'infinity', got {self.endpoint!r}")
        if not (self.similarity_index > 0.0):
            raise ValueError("similarity_index must be positive")


@dataclass
class IntegralTestResult:
    verdict: str  # converges | diverges | inconclusive
    partial_values: list[float]
    increments: list[float]
    decay_exponents: list[float]
    tau_points: list[float]


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _increment(g: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
               panels: int = 8) -> float:
    edges = np.linspace(lo, hi, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1] - edges[0])
    taus = (mid[:, None] + half * _GL_NODES[None, :]).ravel()
    vals = g(taus).reshape(panels, -1)
    return float(half * (vals @ _GL_WEIGHTS).sum())


def eval_integral_test(spec: IntegralTestSpec, exponents: DerivedExponents,
                       n_doublings: int = 8) -> IntegralTestResult:
    """Classify the endpoint integral as convergent, divergent or inconclusive.

    Partial domains are tau-doublings from the anchor |ln t| = e; increments
    I_k between consecutive domains yield local decay exponents
    c_k = 1 - log2(I_{k+1}/I_k).  Verdict: converges when the last three
    c_k >= 1.1 (or the tail has numerically vanished), diverges when the
    last three c_k <= 0.9, inconclusive otherwise.  The band around c = 1
    is the deliberate no-man's-land of the numeric dichotomy.
    """
    sign = -1.0 if spec.endpoint == "zero" else 1.0
    ht = spec.similarity_index
    inv_beta = 1.0 / exponents.beta

    # cap tau so t = exp(+-tau) and t^{H+theta} stay inside float range
    tau_limit = 690.0 / max(1.0, ht)
    kmax = 0
    while kmax < n_doublings and math.e * 2.0 ** (kmax + 1) <= tau_limit:
        kmax += 1
    if kmax < 4:
        raise ValueError("exponents leave too little float headroom for the test")

    def ratio(taus: np.ndarray) -> np.ndarray:
        t = np.exp(sign * taus)
        return np.asarray(spec.xi(t), dtype=float) / t ** ht

    # sampled preconditions: xi nondecreasing, ratio bounded
    taus_probe = np.linspace(math.e, math.e * 2.0 ** kmax, 1000)
    t_probe = np.exp(sign * taus_probe)
    order = np.argsort(t_probe)
    xi_vals = np.asarray(spec.xi(t_probe[order]), dtype=float)
    if np.any(np.diff(xi_vals) < -1e-12 * np.maximum(np.abs(xi_vals[:-1]), 1e-300)):
        raise ValueError("xi must be nondecreasing on the test domain")
    r_probe = ratio(taus_probe)
    if not np.all(np.isfinite(r_probe)) or np.any(r_probe <= 0.0):
        raise ValueError("xi(t)/t^(H+theta) must be positive and finite")
    if r_probe[-1] > 1e8 and r_probe[-1] > 100.0 * r_probe[0]:
        raise UnboundedRatioError(
            f"ratio grows to {r_probe[-1]:.3e} toward the endpoint"
        )

    def integrand(taus: np.ndarray) -> np.ndarray:
        r = ratio(taus)
        return r ** (-inv_beta) * np.asarray(spec.phi_model(r), dtype=float)

    taus = [math.e * 2.0 ** k for k in range(kmax + 1)]
    increments = [
        _increment(integrand, taus[k], taus[k + 1]) for k in range(kmax)
    ]
    partial = list(np.cumsum(increments))

    decay = []
    for a, b in zip(increments[:-1], increments[1:]):
        if a <= 0.0 or b <= 0.0:
            decay.append(math.inf)
        else:
            decay.append(1.0 - math.log2(b / a))

    total = partial[-1] if partial else 0.0
    tail_dead = increments and (increments[-1] == 0.0
                                or increments[-1] < 1e-14 * max(total, 1e-300))
    last = decay[-3:]
    if tail_dead or (len(last) == 3 and all(c >= 1.1 for c in last)):
        verdict = "converges"
    elif len(last) == 3 and all(c <= 0.9 for c in last):
        verdict = "diverges"
    else:
        verdict = "inconclusive"
    return IntegralTestResult(verdict=verdict, partial_values=partial,
                              increments=increments, decay_exponents=decay,
                              tau_points=taus)


@dataclass
class ChungSeries:
    """Per-path liminf-type statistics along dyadic times."""

    times: np.ndarray
    statistic: np.ndarray  # n_paths x k
    running_min: np.ndarray  # n_paths x k, cumulative minimum along k
    medians: np.ndarray  # medians of running_min per k
    endpoint: str
    exponent_used: float

    def final_percentiles(self, qs=(5.0, 50.0, 95.0)) -> dict[float, float]:
        return {q: float(np.percentile(self.running_min[:, -1], q)) for q in qs}


def chung_statistic(params: ProcessParams, k_max: int, n_paths: int, seed: int,
                    endpoint: str = "zero", exponent_override: float | None = None,
                    points_per_smallest: int = 64,
                    noise_mesh: int | None = None) -> ChungSeries:
    """Running-min statistics M(t_k) (ln ln .)^beta / t_k^{H+theta}.

    Endpoint zero uses t_k = 2^{-k} e^{-e} (k = 1..k_max) on a grid that
    resolves the smallest time with ``points_per_smallest`` points; endpoint
    infinity mirrors with t_k = 2^k e^e.  ``exponent_override`` replaces the
    exponent on the iterated-logarithm factor only, which is the knob the
    misspecification diagnostics turn.
    """
    if k_max < 4:
        raise ValueError("k_max must be >= 4")
    if endpoint not in ("zero", "infinity"):
        raise ValueError(f"endpoint must be 'zero' or 'infinity', got {endpoint!r}")
    d = derive(params)
    ht = d.hurst + params.theta
    b = d.beta if exponent_override is None else float(exponent_override)

    ks = np.arange(1, k_max + 1)
    if endpoint == "zero":
        times = 2.0 ** (-ks) / E_E
        horizon = times[0]
        loglog = np.log(np.log(1.0 / times))
    else:
        times = 2.0 ** ks * E_E
        horizon = times[-1]
        loglog = np.log(np.log(times))

    m = points_per_smallest * 2 ** (k_max - 1)
    grid = np.arange(1, m + 1) * (horizon / m)
    if noise_mesh is None:
        noise_mesh = max(4096, m + m // 2)
    cov = discretized_cov(params, grid, process="Y", noise_mesh=noise_mesh)
    batch = sample_gaussian(factorize(cov), n_paths, seed)

    # k already walks toward the endpoint for both regimes
    stat = np.empty((n_paths, k_max))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for j, tk in enumerate(times):
            stat[:, j] = sup_statistic(batch, tk) * loglog[j] ** b / tk ** ht
    runmin = np.minimum.accumulate(stat, axis=1)
    medians = np.median(runmin, axis=0)
    return ChungSeries(times=times, statistic=stat, running_min=runmin,
                       medians=medians, endpoint=endpoint, exponent_used=b)


@dataclass
class ProbeReport:
    """Monte Carlo diagnostics for the joint small-value inequalities."""

    p_joint: float
    joint_ci: tuple[float, float]
    phi_nu: float
    phi_eta_unit: float
    p_eta_abs: float
    ratio_exponential: float
    ratio_independence: float
    degenerate: bool
    n: int
    params: ProcessParams
    inputs: dict = field(default_factory=dict)


def maximal_inequality_probe(params: ProcessParams, t: float, u: float,
                             nu: float, eta: float, n_paths: int, seed: int,
                             grid_n: int = 2048,
                             noise_mesh: int | None = None) -> ProbeReport:
    """Estimate P(M(t) <= nu t^{H+theta}, M(u) <= eta) and diagnostic ratios.

    phi(nu) and phi(eta) come from the same paths via the self-similar
    identity phi(x) = P(M(s) <= x s^{H+theta}), so all probabilities share
    common random numbers and event inclusions hold exactly.  The ratios are
    qualitative: the constants they would calibrate are unknown.
    """
    if not (t > 0 and u >= t):
        raise ValueError("need 0 < t <= u")
    if nu <= 0 or eta <= 0:
        raise ValueError("nu and eta must be positive")
    d = derive(params)
    ht = d.hurst + params.theta
    grid = np.arange(1, grid_n + 1) * (u / grid_n)
    if noise_mesh is None:
        noise_mesh = max(4096, grid_n + grid_n // 2)
    cov = discretized_cov(params, grid, process="Y", noise_mesh=noise_mesh)
    batch = sample_gaussian(factorize(cov), n_paths, seed)
    m_t = sup_statistic(batch, t)
    m_u = sup_statistic(batch, u)
    ev_a = m_t <= nu * t ** ht
    ev_b = m_u <= eta
    joint = int(np.count_nonzero(ev_a & ev_b))
    if joint == 0:
        raise ZeroHitsError("joint event never occurred; increase n_paths or levels")
    p_joint = joint / n_paths
    phi_nu = float(np.mean(ev_a))
    phi_eta_unit = float(np.mean(m_u <= eta * u ** ht))
    p_eta_abs = float(np.mean(ev_b))
    if u > t:
        denom = (u - t) * u ** (-params.gamma / (2.0 * d.beta)) * eta ** (-1.0 / d.beta)
        ratio_exp = math.log(p_joint) / denom
    else:
        ratio_exp = math.nan
    ratio_ind = (p_joint / (phi_nu * phi_eta_unit)
                 if phi_nu > 0 and phi_eta_unit > 0 else math.inf)
    degenerate = p_joint > 0.99 or phi_nu > 0.99 or p_eta_abs > 0.99
    return ProbeReport(
        p_joint=p_joint, joint_ci=wilson_interval(joint, n_paths),
        phi_nu=phi_nu, phi_eta_unit=phi_eta_unit, p_eta_abs=p_eta_abs,
        ratio_exponential=ratio_exp, ratio_independence=ratio_ind,
        degenerate=degenerate, n=n_paths, params=params,
        inputs={"t": t, "u": u, "nu": nu, "eta": eta, "grid_n": grid_n},
    )
