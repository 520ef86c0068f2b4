"""The message-passing iteration and its convergence diagnostics.

One step, from (x, z):

    x_new = eta(A^T z + x; theta)
    z_new = y - A x_new + (count of active entries / n) * z

The scalar multiplying z is the memory (Onsager) correction; it is what
keeps the effective noise of A^T z + x Gaussian and makes the scalar
recursion in state_evolution track the iterates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, DivergenceError
from .instances import empirical_observable
from .scalars import soft_threshold
from .state_evolution import invert_calibration, se_map

_SIGN_SLACK = 1e-12


@dataclass
class AmpState:
    """Iterate at time t.

    theta_t is the threshold applied by the step that produced x (nan at
    t=0, where no step has run); tau_t is the matching SE scale for z; pre
    is the pre-threshold vector A^T z_prev + x_prev that x was cut from,
    kept so the optimality diagnostics need no extra matrix products.
    """

    x: np.ndarray
    z: np.ndarray
    t: int
    tau_t: float
    theta_t: float
    onsager: float
    pre: np.ndarray | None = field(default=None, repr=False)


def initial_state(y, N, tau0=float("nan")):
    """The t=0 state: x = 0, z = y (no memory term exists yet)."""
    y = np.asarray(y, dtype=float)
    return AmpState(x=np.zeros(N), z=y.copy(), t=0, tau_t=tau0, theta_t=float("nan"), onsager=0.0)


def amp_step(state, A, y, theta, tau=float("nan")):
    """Advance one iteration with threshold theta.

    Exactly one product with A and one with A^T. `tau` optionally records
    the SE scale of the new state for diagnostics.

    Raises:
        ValueError: dimension mismatch or nonpositive threshold.
        DivergenceError: non-finite values appear (carries the iteration).
    """
    n, N = A.shape
    if state.x.shape[0] != N or state.z.shape[0] != n or y.shape[0] != n:
        raise ValueError(f"dimension mismatch: A {A.shape}, x {state.x.shape}, z {state.z.shape}, y {y.shape}")
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    with np.errstate(over="ignore", invalid="ignore"):
        pre = A.T @ state.z + state.x
        x_new = soft_threshold(pre, theta)
        onsager = float(np.count_nonzero(np.abs(pre) > theta)) / n
        z_new = y - A @ x_new + onsager * state.z
    if not (np.isfinite(x_new).all() and np.isfinite(z_new).all()):
        raise DivergenceError(f"non-finite iterate at t={state.t + 1}", t=state.t + 1)
    return AmpState(x=x_new, z=z_new, t=state.t + 1, tau_t=tau, theta_t=theta,
                    onsager=onsager, pre=pre)


@dataclass
class AmpDiagnostics:
    """Per-iteration record (row t describes the state after step t)."""

    t: int
    theta: float
    tau2_se: float
    z_norm2_over_n: float
    mse_vs_x0: float
    delta_x_norm: float
    subgradient_norm: float
    active_set_size: int
    active_set_jaccard_prev: float


DIAGNOSTICS_COLUMNS = ("t", "theta_t", "tau2_se", "z_norm2_over_n", "mse_vs_x0",
                       "delta_x_norm", "subgradient_norm", "active_set_size")


def write_diagnostics_csv(diagnostics, path):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIAGNOSTICS_COLUMNS)
        for d in diagnostics:
            writer.writerow([d.t, d.theta, d.tau2_se, d.z_norm2_over_n, d.mse_vs_x0,
                             d.delta_x_norm, d.subgradient_norm, d.active_set_size])


def _boundary_coords(pre, x_new, theta):
    """v = (pre - x)/theta; +-1 exactly on the support, inside (-1,1) off it."""
    v = (pre - x_new) / theta
    excess = float(np.max(np.abs(v))) - 1.0
    if excess > _SIGN_SLACK:
        raise ConsistencyError(f"subgradient entry exceeds 1 by {excess:.3e}")
    return v


def _jaccard(a, b):
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(a & b)) / union


def run_amp(instance, params, lam, t_max=200, stop_tol=1e-8,
            threshold_policy="se", gamma=0.1, active_mask_sink=None):
    """Run the iteration with thresholds theta_t = alpha * tau_t.

    alpha comes from invert_calibration(lam); tau_t is the SE sequence by
    default (threshold_policy="se"). threshold_policy="residual" replaces
    tau_t by the running estimate ||z^t||/sqrt(n); the asymptotic theory is
    proved for the SE policy only, but the residual variant adapts to the
    drawn instance and is the standard choice when comparing against the
    per-instance optimum. Stops at t_max or when ||x_new - x|| / sqrt(N)
    drops to stop_tol. The subgradient column is produced with no extra
    matrix products by reusing each step's A^T z (one extra product at the
    final iterate only).

    If active_mask_sink is a dict it receives {t: boolean mask} of the
    near-boundary set at every iteration.

    Returns:
        (final AmpState, list of AmpDiagnostics, one entry per step).
    """
    if threshold_policy not in ("se", "residual"):
        raise ValueError(f"unknown threshold policy {threshold_policy!r}")
    A, y, x0 = instance.A, instance.y, instance.x0
    n, N = A.shape
    alpha = invert_calibration(params, lam)

    tau2_se = [params.tau2_init]
    for _ in range(t_max):
        tau2_se.append(se_map(params, tau2_se[-1], alpha * math.sqrt(tau2_se[-1])))

    state = initial_state(y, N, tau0=math.sqrt(tau2_se[0]))
    diagnostics = []
    prev_mask = np.zeros(N, dtype=bool)
    # carried between steps to finish the previous row's subgradient:
    # lam * v - (A^T z - onsager * A^T z_prev), where A^T z is read off the
    # NEXT step's pre-threshold vector
    pending = None

    for t in range(t_max):
        if threshold_policy == "se":
            theta = alpha * math.sqrt(tau2_se[t])
        else:
            theta = alpha * float(np.linalg.norm(state.z)) / math.sqrt(n)
        new = amp_step(state, A, y, theta, tau=math.sqrt(tau2_se[t + 1]))
        atz_prev = new.pre - state.x  # A^T z of the consumed state
        if pending is not None:
            sg = pending["lam_v"] - (atz_prev - pending["onsager"] * pending["atz_prev"])
            diagnostics[-1].subgradient_norm = float(np.linalg.norm(sg)) / math.sqrt(N)

        v = _boundary_coords(new.pre, new.x, theta)
        mask = np.abs(v) >= 1.0 - gamma
        if active_mask_sink is not None:
            active_mask_sink[new.t] = mask
        delta_x = float(np.linalg.norm(new.x - state.x)) / math.sqrt(N)
        diagnostics.append(AmpDiagnostics(
            t=new.t,
            theta=theta,
            tau2_se=tau2_se[t + 1],
            z_norm2_over_n=float(np.dot(new.z, new.z)) / n,
            mse_vs_x0=empirical_observable(new.x, x0, "squared_error"),
            delta_x_norm=delta_x,
            subgradient_norm=float("nan"),
            active_set_size=int(np.count_nonzero(mask)),
            active_set_jaccard_prev=_jaccard(mask, prev_mask),
        ))
        pending = {"lam_v": lam * v, "onsager": new.onsager, "atz_prev": atz_prev}
        prev_mask = mask
        state = new
        if delta_x <= stop_tol:
            break

    if pending is not None:
        atz = A.T @ state.z
        sg = pending["lam_v"] - (atz - pending["onsager"] * pending["atz_prev"])
        diagnostics[-1].subgradient_norm = float(np.linalg.norm(sg)) / math.sqrt(N)
    return state, diagnostics


def subgradient_residual(state, prev_state, A, y, lam, theta_prev):
    """N^{-1/2} times the norm of the certificate lam*s - A^T(y - A x) at x = state.x.

    s has sign(x_i) on the support and (A^T z_prev + x_prev)_i / theta_prev
    off it; both cases equal (pre - x)/theta_prev, whose entries lie in
    [-1, 1] for consecutive iterates.

    Raises:
        ConsistencyError: an entry of s exceeds 1 in magnitude (broken pair),
            or s disagrees with the support signs.
    """
    if prev_state.t + 1 != state.t:
        raise ValueError(f"states are not consecutive: t={prev_state.t} then t={state.t}")
    N = state.x.shape[0]
    pre = state.pre if state.pre is not None else A.T @ prev_state.z + prev_state.x
    s = _boundary_coords(pre, state.x, theta_prev)
    on = state.x != 0.0
    if on.any() and np.max(np.abs(s[on] - np.sign(state.x[on]))) > 1e-6:
        raise ConsistencyError("subgradient does not match support signs")
    sg = lam * s - A.T @ (y - A @ state.x)
    return float(np.linalg.norm(sg)) / math.sqrt(N)


def active_set(state, prev_state, theta_prev, gamma):
    """Indices whose boundary coordinate |(pre - x)/theta_prev| is >= 1 - gamma.

    This is the stabilizing candidate-support set; on the support the
    coordinate is exactly +-1, so the set always contains the support.
    Returns a sorted index array.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0,1), got {gamma}")
    if prev_state.t + 1 != state.t:
        raise ValueError(f"states are not consecutive: t={prev_state.t} then t={state.t}")
    if state.pre is None:
        raise ValueError("state does not carry its pre-threshold vector")
    v = _boundary_coords(state.pre, state.x, theta_prev)
    return np.flatnonzero(np.abs(v) >= 1.0 - gamma)
