"""Linear stability toolkit: spectra, Lyapunov certificates, closed-loop assembly."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import LinearModel
from .pida import PidaGains


class NotHurwitzError(ValueError):
    """A positive definite Lyapunov solution requires a Hurwitz matrix."""


@dataclass
class StabilityReport:
    eigenvalues: np.ndarray
    max_real_part: float
    is_hurwitz: bool
    lyapunov_p: np.ndarray | None = None
    p_min_eigenvalue: float | None = None

    def summary(self) -> str:
        lines = [
            f"states: {len(self.eigenvalues)}",
            f"max real part: {self.max_real_part:.6e}",
            f"hurwitz: {self.is_hurwitz}",
        ]
        if self.p_min_eigenvalue is not None:
            lines.append(f"lyapunov P min eigenvalue: {self.p_min_eigenvalue:.6e}")
        lines.append("eigenvalues (sorted by real part):")
        for lam in self.eigenvalues:
            lines.append(f"  {lam.real:+.9e} {lam.imag:+.9e}j")
        return "\n".join(lines)


def eigenvalues(a: np.ndarray) -> np.ndarray:
    """Full spectrum of a square matrix, sorted by descending real part."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    lams = np.linalg.eigvals(a)
    order = np.lexsort((-lams.imag, -lams.real))
    return lams[order]


def _require_symmetric(p: np.ndarray, name: str, tol: float = 1e-9) -> None:
    if np.max(np.abs(p - p.T)) >= tol:
        raise ValueError(f"{name} must be symmetric within {tol}")


def solve_lyapunov(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Solve A^T P + P A = -Q by Kronecker vectorization.

    Valid (and fast enough) at the model orders used here, n <= ~25.
    Rejects non-Hurwitz A, for which no unique positive definite solution
    exists, and asymmetric Q.
    """
    a = np.asarray(a, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if a.shape != q.shape:
        raise ValueError("A and Q must have matching shapes")
    _require_symmetric(q, "Q")
    lams = eigenvalues(a)
    if lams[0].real >= 0.0:
        raise NotHurwitzError(
            f"A has an eigenvalue with real part {lams[0].real:.3e} >= 0"
        )

    n = a.shape[0]
    eye = np.eye(n)
    # vec(A^T P + P A) = (I (x) A^T + A^T (x) I) vec(P), column-major vec
    kron = np.kron(eye, a.T) + np.kron(a.T, eye)
    vec_p = np.linalg.solve(kron, -q.flatten(order="F"))
    p = vec_p.reshape((n, n), order="F")
    p = 0.5 * (p + p.T)

    residual = np.linalg.norm(a.T @ p + p @ a + q, ord="fro")
    if residual >= 1e-8 * np.linalg.norm(q, ord="fro"):
        raise ArithmeticError(f"Lyapunov residual {residual:.3e} exceeds tolerance")
    return p


def is_positive_definite(
    p: np.ndarray, n_probes: int = 16
) -> tuple[bool, float]:
    """Spectral positive-definiteness test, returning the minimum eigenvalue.

    Also cross-checks the Rayleigh-quotient bounds
    lam_min ||x||^2 <= x^T P x <= lam_max ||x||^2 on a few probe vectors.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("matrix must be square")
    _require_symmetric(p, "P")
    lams = np.linalg.eigvalsh(p)
    lam_min, lam_max = float(lams[0]), float(lams[-1])

    probe_rng = np.random.default_rng(0)
    slack = 1e-9 * max(1.0, abs(lam_min), abs(lam_max))
    for _ in range(n_probes):
        x = probe_rng.standard_normal(p.shape[0])
        quad = float(x @ p @ x)
        norm2 = float(x @ x)
        if not (lam_min * norm2 - slack <= quad <= lam_max * norm2 + slack):
            raise ArithmeticError("Rayleigh bounds violated; matrix is ill-conditioned")
    return lam_min > 0.0, lam_min


def closed_loop_matrix(
    model: LinearModel,
    gains: Sequence[PidaGains],
    rate_output_channels: Sequence[int] = (3,),
) -> np.ndarray:
    """Closed-loop state matrix of the tracking-augmented plant under PIDA control.

    ``model`` must come from augment_tracking: its state is [x, x_n] where
    x_n integrates the output tracking error. Each control channel i drives
    plant input i from output i and contributes filtered-derivative and
    filtered-acceleration states. For channels listed in
    ``rate_output_channels`` the plant output is the rate of the tracked
    quantity (the reduced model measures climb rate, not altitude), so the
    augmented state x_n is the tracked error itself; those channels act
    proportionally on x_n and gain one extra integral state.
    """
    p = model.n_outputs
    m = model.n_inputs
    if len(gains) != p or p != m:
        raise ValueError("one gain set per channel is required and plant must be square")
    n = model.n_states - p
    if n <= 0:
        raise ValueError("model does not look tracking-augmented")
    a = model.a[:n, :n]
    c = -model.a[n:, :n]
    b = model.b[:n, :]
    if np.max(np.abs(model.a[:n, n:])) > 0 or np.max(np.abs(model.b[n:, :])) > 0:
        raise ValueError("model does not have the tracking-augmented block structure")

    rate_set = set(rate_output_channels)
    # state layout: x (n) | x_n (p) | per channel: [z (rate channels only), d, a]
    offsets = []
    pos = n + p
    for ch in range(p):
        entry = {}
        if ch in rate_set:
            entry["z"] = pos
            pos += 1
        entry["d"] = pos
        entry["a"] = pos + 1
        pos += 2
        offsets.append(entry)
    total = pos

    # control law: u = G xi with xi the stacked closed-loop state
    g_mat = np.zeros((m, total))
    for ch, gain in enumerate(gains):
        if ch in rate_set:
            g_mat[ch, n + ch] += gain.kp          # error state
            g_mat[ch, offsets[ch]["z"]] += gain.ki
        else:
            g_mat[ch, :n] += -gain.kp * c[ch]     # e = -C x
            g_mat[ch, n + ch] += gain.ki
        g_mat[ch, offsets[ch]["d"]] += gain.kd
        g_mat[ch, offsets[ch]["a"]] += gain.ka

    a_cl = np.zeros((total, total))
    a_cl[:n, :n] = a
    a_cl[:n, :] += b @ g_mat
    a_cl[n : n + p, :n] = -c

    for ch, gain in enumerate(gains):
        tf = gain.tf
        # row producing d(e_ch)/dt as a function of the closed-loop state
        edot = np.zeros(total)
        if ch in rate_set:
            edot[:n] = -c[ch]                     # de/dt = d(x_n)/dt = -C x
            a_cl[offsets[ch]["z"], n + ch] = 1.0  # integral of the error state
        else:
            edot[:n] = -c[ch] @ a
            edot -= (c[ch] @ b) @ g_mat           # de/dt = -C (A x + B u)
        row_d = edot / tf
        row_d[offsets[ch]["d"]] -= 1.0 / tf
        a_cl[offsets[ch]["d"]] = row_d
        row_a = row_d / tf
        row_a[offsets[ch]["a"]] -= 1.0 / tf
        a_cl[offsets[ch]["a"]] = row_a

    return a_cl


def analyze(a: np.ndarray, q: np.ndarray | None = None) -> StabilityReport:
    """Spectrum plus, for Hurwitz matrices, a Lyapunov certificate with Q = I."""
    lams = eigenvalues(a)
    max_real = float(lams[0].real)
    report = StabilityReport(
        eigenvalues=lams, max_real_part=max_real, is_hurwitz=max_real < 0.0
    )
    if report.is_hurwitz:
        if q is None:
            q = np.eye(a.shape[0])
        p = solve_lyapunov(a, q)
        _, lam_min = is_positive_definite(p)
        report.lyapunov_p = p
        report.p_min_eigenvalue = lam_min
    return report


def eigenvalues_to_csv(lams: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("real,imag\n")
        for lam in lams:
            fh.write(f"{lam.real:.17g},{lam.imag:.17g}\n")
