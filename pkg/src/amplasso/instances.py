"""Random problem instances: signal, noise, measurement matrix, checks.

Streams for the signal, the noise, and the matrix are split off the seed
independently (SeedSequence spawn keys), so any one field can be regenerated
or held fixed without touching the others.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

ENSEMBLES = ("gaussian", "rademacher")
_FIELD_TAGS = {"x0": 0, "w": 1, "A": 2}
_HEADER_FMT = "<qqddBq"  # N, n, delta, sigma2, ensemble code, seed


@dataclass
class Instance:
    """One drawn problem y = A x0 + w."""

    A: np.ndarray
    x0: np.ndarray
    w: np.ndarray
    y: np.ndarray
    seed: int
    ensemble: str
    delta: float
    sigma2: float

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def N(self):
        return self.A.shape[1]


def _stream(seed, field):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(_FIELD_TAGS[field],)))


def generate(params, N, ensemble, seed):
    """Draw an instance: x0 iid from the prior, w iid N(0, sigma2), A per ensemble.

    n = round(delta * N) with ties to even. Deterministic given seed; the
    three fields use independent substreams of the seed.
    """
    if ensemble not in ENSEMBLES:
        raise ValueError(f"ensemble must be one of {ENSEMBLES}, got {ensemble!r}")
    if N < 2:
        raise ValueError(f"N must be at least 2, got {N}")
    n = int(round(params.delta * N))
    if n < 1:
        raise ValueError(f"delta*N rounds to {n}; need at least one row")
    x0 = _stream(seed, "x0").choice(params.prior.atoms_arr, size=N, p=params.prior.weights_arr)
    w = _stream(seed, "w").normal(0.0, np.sqrt(params.sigma2), n)
    if ensemble == "gaussian":
        A = _stream(seed, "A").normal(0.0, 1.0 / np.sqrt(n), (n, N))
    else:
        A = (_stream(seed, "A").integers(0, 2, (n, N)) * 2.0 - 1.0) / np.sqrt(n)
    y = A @ x0 + w
    return Instance(A=A, x0=x0, w=w, y=y, seed=int(seed), ensemble=ensemble,
                    delta=float(params.delta), sigma2=float(params.sigma2))


def singular_edge_check(A, delta):
    """Compare the extreme singular values of A to the asymptotic bulk edges.

    The edges are 1/sqrt(delta) + 1 and |1/sqrt(delta) - 1| (absolute value
    so the check also applies to delta > 1). Computed from the Gram matrix
    of the smaller dimension. Returns (sigma_max, sigma_min_nonzero, passed);
    the 5% pass threshold is only enforced for N >= 1000, smaller matrices
    report values without a verdict.
    """
    n, N = A.shape
    if min(n, N) <= 500:
        sv = np.linalg.svd(A, compute_uv=False)
        smax, smin = float(sv[0]), float(sv[min(n, N) - 1])
    else:
        G = A @ A.T if n <= N else A.T @ A
        eigs = np.linalg.eigvalsh(G)
        smax, smin = float(np.sqrt(eigs[-1])), float(np.sqrt(max(eigs[0], 0.0)))
    edge_hi = 1.0 / np.sqrt(delta) + 1.0
    edge_lo = abs(1.0 / np.sqrt(delta) - 1.0)
    if N < 1000:
        passed = True
    else:
        ok_hi = abs(smax - edge_hi) <= 0.05 * edge_hi
        ok_lo = edge_lo == 0.0 or abs(smin - edge_lo) <= 0.05 * edge_lo
        passed = bool(ok_hi and ok_lo)
    return smax, smin, passed


def empirical_observable(x_est, x0, psi_id):
    """Empirical average of a named coordinate-wise observable.

    psi_id one of: "squared_error" (mean squared deviation from x0),
    "l1" (mean absolute value of the estimate), "support" (fraction of
    nonzero estimate entries; note this indicator falls outside the
    pseudo-Lipschitz class the asymptotic theory literally covers).
    """
    x_est = np.asarray(x_est, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if x_est.shape != x0.shape:
        raise ValueError(f"length mismatch: {x_est.shape} vs {x0.shape}")
    if psi_id == "squared_error":
        return float(np.mean((x_est - x0) ** 2))
    if psi_id == "l1":
        return float(np.mean(np.abs(x_est)))
    if psi_id == "support":
        return float(np.mean(x_est != 0.0))
    raise ValueError(f"unknown observable {psi_id!r}")


def save_instance(instance, path):
    """Persist to the binary container: fixed header, then A, x0, w as
    row-major little-endian float64."""
    code = ENSEMBLES.index(instance.ensemble)
    header = struct.pack(_HEADER_FMT, instance.N, instance.n, instance.delta,
                         instance.sigma2, code, instance.seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(instance.A, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(instance.x0, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(instance.w, dtype="<f8").tobytes())


def load_instance(path):
    """Read a container written by save_instance; y is recomputed as A x0 + w."""
    hsize = struct.calcsize(_HEADER_FMT)
    with open(path, "rb") as fh:
        raw = fh.read(hsize)
        if len(raw) != hsize:
            raise ValueError(f"container header has {len(raw)} bytes, expected {hsize}")
        N, n, delta, sigma2, code, seed = struct.unpack(_HEADER_FMT, raw)
        body = fh.read()
    if not (0 <= code < len(ENSEMBLES)) or N <= 0 or n <= 0:
        raise ValueError("container header is not valid")
    expected = 8 * (n * N + N + n)
    if len(body) != expected:
        raise ValueError(f"container body has {len(body)} bytes, expected {expected}")
    A = np.frombuffer(body[: 8 * n * N], dtype="<f8").reshape(n, N).copy()
    x0 = np.frombuffer(body[8 * n * N: 8 * (n * N + N)], dtype="<f8").copy()
    w = np.frombuffer(body[8 * (n * N + N):], dtype="<f8").copy()
    return Instance(A=A, x0=x0, w=w, y=A @ x0 + w, seed=seed,
                    ensemble=ENSEMBLES[code], delta=delta, sigma2=sigma2)
