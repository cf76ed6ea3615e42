"""Closed-form and idle-system throughput of the coexisting network.

The idle-state probabilities ``y[d] = pi~(I,I,d)`` solve ``y = A y + b``;
busy-state probabilities, and from them the throughputs, follow from ``y``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .model import (
    B,
    I,
    ChainState,
    SystemConfig,
    derive_rates,
    enumerate_chain,
    holding_time,
    wrap_index,
)

CLOSED_FORM = "closed-form"
CHAIN_SOLVE = "chain-solve"
SIMULATION = "simulation"


class DegenerateParameterError(ArithmeticError):
    """``I - A`` is singular for the requested parameters."""


@dataclass(frozen=True)
class MatrixCoefficients:
    u: float
    v: float
    w: float
    z: float
    h: float
    e: float
    g: float
    f: float

    @classmethod
    def from_rho(cls, rho_A, rho_C, S, l_C):
        u = rho_A * (rho_C - 1.0)
        v = rho_C
        z = rho_A * (1.0 - rho_C)
        return cls(u=u, v=v, w=1.0 - rho_C, z=z,
                   h=(l_C // S) * u, e=(-(-l_C // S)) * u,
                   g=l_C / S * u, f=v + z)


@dataclass
class IdleSystem:
    A: np.ndarray
    b: np.ndarray
    y: Optional[np.ndarray] = None
    template: str = ""

    @property
    def alpha_C(self) -> float:
        return float(np.sum(self.y))


def _fill_template(S: int, l_C: int, c: MatrixCoefficients):
    """Coefficient matrix laid out as the three printed templates."""
    A = np.zeros((S, S))
    r = l_C % S
    if r == 0:
        A[0, :] = c.g
        for d in range(1, S):
            A[d, d - 1] = c.f
        return A, "integer-multiple"
    if l_C > S:
        A[0, :S - r] = c.h
        A[0, S - r:] = c.e
        for d in range(1, S):
            A[d, d - 1] = c.v
            A[d, (d - 1 - r) % S] = c.z
        return A, "l_C >= S"
    A[0, S - l_C:] = c.u
    for d in range(1, S):
        A[d, d - 1] = c.v
        if d <= l_C:
            A[d, S - l_C + d - 1] = c.z
        else:
            A[d, d - l_C - 1] = c.w
    return A, "l_C < S"


def build_A(cfg: SystemConfig) -> IdleSystem:
    rates = derive_rates(cfg)
    coeffs = MatrixCoefficients.from_rho(rates.rho_A, rates.rho_C, cfg.S, cfg.l_C)
    A, template = _fill_template(cfg.S, cfg.l_C, coeffs)
    b = np.zeros(cfg.S)
    b[0] = rates.rho_A / cfg.S
    return IdleSystem(A=A, b=b, template=template)


def solve_idle(cfg: SystemConfig) -> IdleSystem:
    system = build_A(cfg)
    M = np.eye(cfg.S) - system.A
    try:
        y = np.linalg.solve(M, system.b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateParameterError(f"I - A is singular for {cfg}") from exc
    if not np.all(np.isfinite(y)):
        raise DegenerateParameterError(f"I - A is singular for {cfg}")
    residual = np.max(np.abs(system.A @ y + system.b - y))
    if residual > 1e-12:
        raise DegenerateParameterError(f"idle system residual {residual:.3e} for {cfg}")
    system.y = y
    return system


def alpha_C(cfg: SystemConfig) -> float:
    """Long-run fraction of time both channels are idle."""
    return solve_idle(cfg).alpha_C


@dataclass(frozen=True)
class SpanCounts:
    M: np.ndarray


def span_counts(cfg: SystemConfig) -> SpanCounts:
    """Number of Aloha slots touched by a CSMA packet started at each phase."""
    S, l_C = cfg.S, cfg.l_C
    r = l_C % S
    if r == 0:
        M = np.full(S, l_C // S + 1)
        M[0] = l_C // S
    else:
        base = -(-l_C // S)
        M = np.full(S, base + 1)
        # first branch runs through k = S - r inclusive
        M[:S - r + 1] = base
    return SpanCounts(M=M)


def _success_factor(q: float, n: int) -> float:
    """P(exactly one transmitter | at least one), continuous at q = 0."""
    if n == 0:
        return 0.0
    if q == 0.0:
        return 1.0
    return n * q * (1.0 - q) ** (n - 1) / -np.expm1(n * np.log1p(-q)) if q < 1.0 else float(n == 1)


def _wrap_counts(S: int, l_C: int) -> np.ndarray:
    """How often each idle phase precedes a busy state covering phase 0."""
    counts = np.zeros(S)
    for D in range(-(l_C - 1), 1):
        counts[wrap_index(D, S)] += 1
    return counts


def aloha_busy_prob(cfg: SystemConfig, y: Optional[np.ndarray] = None) -> float:
    """pi~(B,I,0) from the phase-sum identity."""
    if y is None:
        y = solve_idle(cfg).y
    rho_C = derive_rates(cfg).rho_C
    covered = (1.0 - rho_C) * float(_wrap_counts(cfg.S, cfg.l_C) @ y)
    return 1.0 / cfg.S - y[0] - covered


def csma_busy_probs(cfg: SystemConfig, y: Optional[np.ndarray] = None) -> np.ndarray:
    """pi~(I,B,k) for k = 0..S-1."""
    if y is None:
        y = solve_idle(cfg).y
    rates = derive_rates(cfg)
    S = cfg.S
    out = np.empty(S)
    for k in range(S):
        tau = holding_time(ChainState(I, B, k), cfg)
        if k > 0:
            out[k] = tau * (1.0 - rates.rho_C) * y[k - 1]
        else:
            out[k] = tau * rates.rho_A * (1.0 - rates.rho_C) * y[S - 1]
    return out


def aloha_throughput(cfg: SystemConfig, pi_BI0: Optional[float] = None) -> float:
    if cfg.q_A == 0.0 or cfg.n_A == 0:
        return 0.0
    if pi_BI0 is None:
        pi_BI0 = aloha_busy_prob(cfg)
    return max(pi_BI0, 0.0) * _success_factor(cfg.q_A, cfg.n_A) * cfg.S


def csma_throughput(cfg: SystemConfig, pi_IB: Optional[np.ndarray] = None) -> float:
    if cfg.q_C == 0.0 or cfg.n_C == 0:
        return 0.0
    if pi_IB is None:
        pi_IB = csma_busy_probs(cfg)
    M = span_counts(cfg).M
    rho_A = derive_rates(cfg).rho_A
    tau = np.array([holding_time(ChainState(I, B, k), cfg) for k in range(cfg.S)])
    total = np.sum(pi_IB * rho_A ** (M - 1) * cfg.l_C / tau)
    return float(total) * _success_factor(cfg.q_C, cfg.n_C)


# --- integer-multiple closed forms -------------------------------------------

def _denominator(rho_A, rho_C, Phi, l_C, S):
    return l_C / S * rho_A * (1 - rho_C) * (1 - Phi) + (1 - rho_A) * (1 - rho_C)


def _K(rho, n):
    """n q (1-q)^(n-1) written in terms of rho = (1-q)^n."""
    if n == 0:
        return 0.0
    return n * rho ** ((n - 1) / n) * (1 - rho ** (1 / n))


def idle_probs_integer(cfg: SystemConfig) -> np.ndarray:
    r = derive_rates(cfg)
    d = np.arange(cfg.S)
    num = r.f ** d * r.rho_A * (1 - r.rho_A) * (1 - r.rho_C) / cfg.S
    return num / _denominator(r.rho_A, r.rho_C, r.Phi, cfg.l_C, cfg.S)


def alpha_C_integer(cfg: SystemConfig) -> float:
    r = derive_rates(cfg)
    return r.rho_A * (1 - r.Phi) / cfg.S / _denominator(r.rho_A, r.rho_C, r.Phi, cfg.l_C, cfg.S)


def alpha_C_equal(cfg: SystemConfig) -> float:
    r = derive_rates(cfg)
    return r.rho_A * (1 - r.Phi) / cfg.S / ((1 - r.rho_A * r.Phi) * (1 - r.rho_C))


def aloha_throughput_integer(cfg: SystemConfig) -> float:
    r = derive_rates(cfg)
    num = _K(r.rho_A, cfg.n_A) * (1 - r.rho_A)
    return num / (cfg.l_C / cfg.S * r.rho_A * (1 - r.Phi) + 1 - r.rho_A)


def aloha_throughput_equal(cfg: SystemConfig) -> float:
    r = derive_rates(cfg)
    return _K(r.rho_A, cfg.n_A) * (1 - r.rho_A) / (1 - r.rho_A * r.Phi)


def csma_throughput_integer(cfg: SystemConfig) -> float:
    r = derive_rates(cfg)
    m = cfg.l_C / cfg.S
    num = m * _K(r.rho_C, cfg.n_C) * r.rho_A ** (m + 1) * (1 - r.Phi)
    return num / _denominator(r.rho_A, r.rho_C, r.Phi, cfg.l_C, cfg.S)


def csma_throughput_equal(cfg: SystemConfig) -> float:
    r = derive_rates(cfg)
    num = _K(r.rho_C, cfg.n_C) * r.rho_A ** 2 * (1 - r.Phi)
    return num / ((1 - r.rho_C) * (1 - r.rho_A * r.Phi))


# --- reports -------------------------------------------------------------------

@dataclass(frozen=True)
class ThroughputReport:
    lambda_A: float
    lambda_C: float
    lambda_total: float
    alpha_C: float
    provenance: str
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _report(lam_A, lam_C, alpha, provenance, note=""):
    return ThroughputReport(float(lam_A), float(lam_C), float(lam_A + lam_C),
                            float(alpha), provenance, note)


def throughput_report(cfg: SystemConfig, method: str = CLOSED_FORM) -> ThroughputReport:
    if method == CLOSED_FORM:
        r = derive_rates(cfg)
        if cfg.is_integer_multiple and r.rho_A < 1.0 and r.rho_C < 1.0:
            lam_A = 0.0 if cfg.q_A == 0 else aloha_throughput_integer(cfg)
            lam_C = 0.0 if cfg.q_C == 0 else csma_throughput_integer(cfg)
            return _report(lam_A, lam_C, alpha_C_integer(cfg), CLOSED_FORM,
                           "integer multiple (explicit formulas)")
        y = solve_idle(cfg).y
        lam_A = aloha_throughput(cfg, aloha_busy_prob(cfg, y))
        lam_C = csma_throughput(cfg, csma_busy_probs(cfg, y))
        return _report(lam_A, lam_C, y.sum(), CLOSED_FORM, "general case (linear solve)")
    if method == CHAIN_SOLVE:
        chain = enumerate_chain(cfg)
        alpha = sum(chain.prob(ChainState(I, I, d)) for d in range(cfg.S))
        lam_A = aloha_throughput(cfg, chain.prob(ChainState(B, I, 0)))
        pi_IB = np.array([chain.prob(ChainState(I, B, k)) for k in range(cfg.S)])
        lam_C = csma_throughput(cfg, pi_IB)
        return _report(lam_A, lam_C, alpha, CHAIN_SOLVE, f"{len(chain.states)} states")
    raise ValueError(f"unknown method {method!r}")


# --- vectorised evaluation for the optimiser ------------------------------------

@lru_cache(maxsize=512)
def _patterns(S: int, l_C: int):
    def unit(**kw):
        base = dict(u=0.0, v=0.0, w=0.0, z=0.0)
        base.update(kw)
        u = base["u"]
        c = MatrixCoefficients(h=(l_C // S) * u, e=(-(-l_C // S)) * u, g=l_C / S * u,
                               f=base["v"] + base["z"], **base)
        return _fill_template(S, l_C, c)[0]

    M = span_counts(SystemConfig(1, 1, 0.0, 0.0, S, l_C)).M
    # exponents of rho_A multiplying y[S-1], y[0], ..., y[S-2] in the CSMA sum
    expo = np.concatenate([M[1:] - 1, M[:1]])
    return unit(u=1.0), unit(v=1.0), unit(w=1.0), unit(z=1.0), _wrap_counts(S, l_C), expo


def throughput_grid(rho_A, rho_C, n_A: int, n_C: int, S: int, l_C: int):
    """Throughputs ``(lambda_A, lambda_C, alpha_C)`` for broadcast arrays of rho."""
    rho_A, rho_C = np.broadcast_arrays(np.asarray(rho_A, float), np.asarray(rho_C, float))
    U, V, W, Z, counts, expo = _patterns(S, l_C)
    ra = rho_A[..., None, None]
    rc = rho_C[..., None, None]
    A = ra * (rc - 1) * U + rc * V + (1 - rc) * W + ra * (1 - rc) * Z
    M = np.eye(S) - A
    b = np.zeros(rho_A.shape + (S,))
    b[..., 0] = rho_A / S
    y = np.linalg.solve(M, b[..., None])[..., 0]
    K_A = _K_array(rho_A, n_A)
    K_C = _K_array(rho_C, n_C)
    lam_A = S * K_A * (1.0 / S - (1 - rho_C) * (y @ counts))
    weights = rho_A[..., None] ** expo
    lam_C = l_C * K_C * np.sum(weights * y, axis=-1)
    return lam_A, lam_C, y.sum(axis=-1)


def _K_array(rho, n):
    if n == 0:
        return np.zeros_like(rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        return n * rho ** ((n - 1) / n) * -np.expm1(np.log(rho) / n)
