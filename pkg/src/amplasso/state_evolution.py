"""State evolution: the scalar recursion tracking AMP's effective noise.

Contains the one-dimensional map and its fixed point, the admissibility
boundary alpha_min(delta), the penalty/threshold calibration in both
directions, the asymptotic risk prediction, and the two-time covariance
recursion used for convergence diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import ConsistencyError, ConvergenceError
from .scalars import (
    Prior,
    cross_mse_functional,
    eta_prime_expectation,
    eta_times_signal_expectation,
    gaussian_pdf,
    l1_expectation,
    mse_functional,
)

_FP_REL_TOL = 1e-12
_FP_MAX_ITER = 100_000
_CAL_REL_TOL = 1e-9
_ALPHA_CAP = 1e6


@dataclass(frozen=True)
class SEParams:
    """Problem parameters: aspect ratio delta = n/N, noise variance, prior."""

    delta: float
    sigma2: float
    prior: Prior

    def __post_init__(self):
        if not (self.delta > 0 and np.isfinite(self.delta)):
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not (self.sigma2 > 0 and np.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not isinstance(self.prior, Prior):
            raise ValueError("prior must be a Prior instance")

    @property
    def tau2_init(self):
        """Starting point of the recursion: sigma^2 + E{X0^2}/delta."""
        return self.sigma2 + self.prior.second_moment / self.delta


@dataclass
class SETrajectory:
    """A run of the recursion tau_{t+1}^2 = F(tau_t^2, alpha tau_t)."""

    tau2_sequence: list
    alpha: float
    converged: bool
    tau2_star: float

    @property
    def theta_sequence(self):
        return [self.alpha * np.sqrt(t2) for t2 in self.tau2_sequence]

    @property
    def theta_star(self):
        return self.alpha * np.sqrt(self.tau2_star)


@dataclass
class TwoTimeCov:
    """Covariance table R[s, t] of the effective noises at iteration pairs."""

    R: np.ndarray
    tau2_sequence: list = field(default_factory=list)


def se_map(params, tau2, theta):
    """F(tau^2, theta) = sigma^2 + E{[eta(X0 + tau Z; theta) - X0]^2} / delta."""
    if tau2 <= 0:
        raise ValueError(f"tau2 must be positive, got {tau2}")
    return params.sigma2 + mse_functional(params.prior, float(np.sqrt(tau2)), theta) / params.delta


def _edge_gap(alpha, delta):
    """(1 + a^2) Phi(-a) - a phi(a) - delta/2, the root function of alpha_min."""
    return (1.0 + alpha * alpha) * ndtr(-alpha) - alpha * gaussian_pdf(alpha) - 0.5 * delta


def alpha_min(delta):
    """Smallest admissible threshold ratio for a given aspect ratio.

    Root of (1 + a^2) Phi(-a) - a phi(a) = delta/2. The left side equals 1/2
    at a = 0 and decreases strictly to 0, so a nonnegative root exists only
    for delta < 1; for delta >= 1 every positive ratio is admissible and 0
    is returned.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if _edge_gap(0.0, delta) <= 0.0:
        return 0.0
    hi = 1.0
    while _edge_gap(hi, delta) > 0.0:
        hi *= 2.0
    return float(brentq(_edge_gap, 0.0, hi, args=(delta,), xtol=1e-15, rtol=8.9e-16))


def fixed_point(params, alpha, tau2_init=None):
    """Iterate the monotone map tau^2 -> F(tau^2, alpha tau) to its fixed point.

    Plain iteration from sigma^2 + E{X0^2}/delta (or a caller-supplied start)
    until successive iterates agree to 1e-12 relative AND the residual
    |tau*^2 - F(tau*^2)| clears 1e-10 (tightened by 1/delta so the risk
    identity downstream holds at the same tolerance). Monotonicity of the
    trajectory is asserted; the iteration cap is 1e5.

    Raises:
        ValueError: alpha <= alpha_min(delta), where the fixed point may not exist.
        ConvergenceError: iteration cap reached (carries the partial trajectory).
    """
    amin = alpha_min(params.delta)
    if alpha <= amin:
        raise ValueError(f"alpha={alpha} is at or below alpha_min={amin:.6g}; fixed point may not exist")
    t2 = params.tau2_init if tau2_init is None else float(tau2_init)
    if t2 <= 0:
        raise ValueError(f"tau2_init must be positive, got {tau2_init}")
    residual_tol = 1e-10 / max(1.0, params.delta)
    seq = [t2]
    nxt = se_map(params, t2, alpha * np.sqrt(t2))
    for _ in range(_FP_MAX_ITER):
        step_ok = abs(nxt - t2) <= _FP_REL_TOL * max(1.0, abs(t2))
        after = se_map(params, nxt, alpha * np.sqrt(nxt))
        if step_ok and abs(after - nxt) <= residual_tol:
            seq.append(nxt)
            _assert_monotone(seq)
            return SETrajectory(tau2_sequence=seq, alpha=alpha, converged=True, tau2_star=nxt)
        seq.append(nxt)
        t2, nxt = nxt, after
    raise ConvergenceError(
        f"state-evolution fixed point did not converge in {_FP_MAX_ITER} iterations (alpha={alpha})",
        trajectory=seq,
    )


def _assert_monotone(seq):
    arr = np.asarray(seq)
    d = np.diff(arr)
    slack = 1e-9 * max(1.0, float(arr.max()))
    if (d > slack).any() and (d < -slack).any():
        raise ConsistencyError("state-evolution trajectory is not monotone")


def se_derivative(params, tau2, alpha):
    """Total derivative dF/dtau^2 along the ray theta = alpha tau, closed form.

    Per atom a, with u = (a - alpha tau)/tau and v = (-a - alpha tau)/tau:

        delta * dF/dtau^2 = (1 + alpha^2) [Phi(u) + Phi(v)]
                            - [(a/tau + alpha) phi(u) - (a/tau - alpha) phi(v)]

    As tau^2 -> infinity this tends to (2/delta)[(1+alpha^2)Phi(-alpha)
    - alpha phi(alpha)], the quantity defining alpha_min.
    """
    if tau2 <= 0:
        raise ValueError(f"tau2 must be positive, got {tau2}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    tau = np.sqrt(tau2)
    a = params.prior.atoms_arr
    u = (a - alpha * tau) / tau
    v = (-a - alpha * tau) / tau
    per_atom = (1.0 + alpha * alpha) * (ndtr(u) + ndtr(v)) - (
        (a / tau + alpha) * gaussian_pdf(u) - (a / tau - alpha) * gaussian_pdf(v)
    )
    return float(np.dot(params.prior.weights_arr, per_atom)) / params.delta


def calibrate_lambda(params, alpha):
    """Penalty corresponding to a threshold ratio:

    lambda(alpha) = alpha tau* [1 - E{eta'(X0 + tau* Z; alpha tau*)} / delta]

    with tau* the fixed point at this alpha. Can be negative near alpha_min.
    """
    traj = fixed_point(params, alpha)
    tau = np.sqrt(traj.tau2_star)
    theta = alpha * tau
    return float(theta * (1.0 - eta_prime_expectation(params.prior, tau, theta) / params.delta))


def invert_calibration(params, lam):
    """Threshold ratio alpha solving calibrate_lambda(alpha) = lam, lam > 0.

    Bracket search: the lower end alpha_min + 1e-6 is known to be below the
    root (the calibration map diverges to -infinity at alpha_min+, so its
    value there is never actually evaluated, which would otherwise require
    a near-critical fixed-point solve); the upper end doubles its distance
    from alpha_min until the map exceeds lam, then bisection runs until the
    recovered penalty matches lam to 1e-9 relative.

    Raises:
        ValueError: lam <= 0.
        ConvergenceError: upper bracket exceeded 1e6 (pathological params).
    """
    if not (lam > 0 and np.isfinite(lam)):
        raise ValueError(f"lambda must be positive and finite, got {lam}")
    amin = alpha_min(params.delta)
    lo = amin + 1e-6
    hi = amin + 1.0
    while calibrate_lambda(params, hi) <= lam:
        lo = hi
        hi = amin + 2.0 * (hi - amin)
        if hi > _ALPHA_CAP:
            raise ConvergenceError(
                f"no alpha <= {_ALPHA_CAP:g} reaches lambda={lam}; parameters look pathological"
            )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lam_mid = calibrate_lambda(params, mid)
        if abs(lam_mid - lam) <= _CAL_REL_TOL * max(1.0, abs(lam)):
            return mid
        if lam_mid > lam:
            hi = mid
        else:
            lo = mid
    raise ConvergenceError(f"calibration bisection stalled for lambda={lam} on [{lo}, {hi}]")


@dataclass
class PredictionBundle:
    """Asymptotic per-coordinate predictions at a given penalty."""

    tau2_star: float
    theta_star: float
    alpha: float
    lam: float
    mse_predicted: float
    l1_predicted: float
    sparsity_predicted: float

    def to_json(self):
        return {
            "tau2_star": self.tau2_star,
            "theta_star": self.theta_star,
            "alpha": self.alpha,
            "lambda": self.lam,
            "mse_predicted": self.mse_predicted,
            "l1_predicted": self.l1_predicted,
            "sparsity_predicted": self.sparsity_predicted,
        }


def predicted_risk(params, lam):
    """Asymptotic MSE and companion observables of the penalized estimate.

    Computes alpha = invert_calibration(lam), the fixed point tau*^2, and the
    predicted MSE by both available expressions: the direct expectation
    E{[eta(X0 + tau* Z; theta*) - X0]^2} and delta (tau*^2 - sigma^2). The two
    must agree to 1e-10 (they are the same number by the fixed-point
    equation); the bundle also carries E{|eta|} and E{eta'}.

    Raises:
        ValueError: prior has no nonzero atom (the prediction needs P{X0 != 0} > 0).
        ConsistencyError: the two MSE expressions disagree beyond 1e-10.
    """
    if params.prior.nonzero_mass <= 0.0:
        raise ValueError("predicted_risk requires P{X0 != 0} > 0")
    alpha = invert_calibration(params, lam)
    traj = fixed_point(params, alpha)
    tau2 = traj.tau2_star
    tau = float(np.sqrt(tau2))
    theta = alpha * tau
    mse_direct = mse_functional(params.prior, tau, theta)
    mse_identity = params.delta * (tau2 - params.sigma2)
    if abs(mse_direct - mse_identity) > 1e-10:
        raise ConsistencyError(
            f"risk expressions disagree: direct={mse_direct!r} vs identity={mse_identity!r}"
        )
    return PredictionBundle(
        tau2_star=tau2,
        theta_star=theta,
        alpha=alpha,
        lam=lam,
        mse_predicted=mse_direct,
        l1_predicted=l1_expectation(params.prior, tau, theta),
        sparsity_predicted=eta_prime_expectation(params.prior, tau, theta),
    )


def two_time_recursion(params, alpha, T):
    """Covariance table R[s, t] of the effective noises across iterations.

    The diagonal follows the one-dimensional recursion exactly (the equal-time
    case of the two-time update), the first row uses the closed-form boundary

        R[0, t+1] = sigma^2 + (E{X0^2} - E{eta(X0 + Z_t; theta_t) X0}) / delta,

    and the interior uses the cross moment with (Z_s, Z_t) jointly Gaussian
    with covariance R[s, t].

    Raises:
        ConsistencyError: the table is not positive semidefinite beyond
            numerical tolerance (exact positive definiteness degrades at
            large T as rows become collinear in exact arithmetic too).
    """
    if T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    amin = alpha_min(params.delta)
    if alpha <= amin:
        raise ValueError(f"alpha={alpha} is at or below alpha_min={amin:.6g}")
    prior, delta = params.prior, params.delta

    tau2 = [params.tau2_init]
    for _ in range(T):
        tau2.append(se_map(params, tau2[-1], alpha * np.sqrt(tau2[-1])))
    taus = np.sqrt(tau2)
    thetas = alpha * taus

    R = np.zeros((T + 1, T + 1))
    for t in range(T + 1):
        R[t, t] = tau2[t]
    ex2 = prior.second_moment
    for t in range(T):
        cross0 = ex2 - eta_times_signal_expectation(prior, taus[t], thetas[t])
        R[0, t + 1] = R[t + 1, 0] = params.sigma2 + cross0 / delta
    for t in range(1, T):
        for s in range(1, t + 1):
            c = cross_mse_functional(prior, taus[s - 1], taus[t], R[s - 1, t], thetas[s - 1], thetas[t])
            R[s, t + 1] = R[t + 1, s] = params.sigma2 + c / delta

    eigs = np.linalg.eigvalsh(R)
    if eigs[0] < -1e-8 * float(R.diagonal().max()):
        raise ConsistencyError(f"two-time covariance has eigenvalue {eigs[0]:.3e} < 0 beyond tolerance")
    return TwoTimeCov(R=R, tau2_sequence=tau2)
