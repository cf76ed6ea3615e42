"""LTE-U / WiFi deployment: map the model optimum onto 802.11 and LTE-U knobs.

The LTE-U eNB is treated as a single Aloha node whose slot is one ON period
(S mini-slots of 9 us), and the WiFi network as the CSMA network with
per-mini-slot attempt probability 2/(CW-1).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence

from .analytic import ThroughputReport, throughput_report
from .model import SystemConfig
from .optimizer import OptimizationError, OptimizationSpec, optimize
from .simulator import SimConfig, WifiLteConfig, run

DEFAULT_S = 112  # 1 ms ON period / 9 us mini-slot, rounded up
FAIL_OVERHEAD = 6  # SIFS + ACK mini-slots missing from a failed exchange

SWEEP_COLUMNS = ("parameter", "lambda_A", "lambda_C", "lambda_total", "ratio", "method", "seed")


@dataclass(frozen=True)
class DeploymentInput:
    n_W: int
    gamma: float
    S: int = DEFAULT_S
    l_W_max: Optional[int] = None  # defaults to 3*S
    l_W_fixed: Optional[int] = None  # optimize (CW, q_L) for this packet length only

    def __post_init__(self):
        if self.n_W < 1:
            raise ValueError("n_W must be >= 1")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.S < 1:
            raise ValueError("S must be >= 1")
        if self.l_W_max is not None and self.l_W_max <= FAIL_OVERHEAD:
            raise ValueError(f"l_W_max must exceed {FAIL_OVERHEAD}")
        if self.l_W_fixed is not None and self.l_W_fixed <= FAIL_OVERHEAD:
            raise ValueError(f"l_W_fixed must exceed {FAIL_OVERHEAD}")


@dataclass(frozen=True)
class DeploymentConfig:
    n_W: int
    gamma: float
    S: int
    CW_opt: int
    q_L_opt: float
    l_W_opt: int
    rho_A_opt: float
    rho_C_opt: float
    lambda_max: float
    predicted: ThroughputReport

    def to_dict(self) -> dict:
        d = asdict(self)
        d["predicted"] = self.predicted.to_dict()
        return d

    def wifi_lte(self, n_W: Optional[int] = None, l_W: Optional[int] = None) -> WifiLteConfig:
        return WifiLteConfig(n_W=n_W or self.n_W, CW=self.CW_opt, l_W=l_W or self.l_W_opt,
                             q_L=self.q_L_opt, S=self.S, fail_overhead=FAIL_OVERHEAD)


def cw_from_rho(rho_C: float, n_W: int) -> int:
    """Backoff window whose attempt rate 2/(CW-1) reproduces rho_C, rounded up."""
    if not 0 < rho_C < 1:
        raise ValueError("rho_C must lie in (0, 1)")
    q = -math.expm1(math.log(rho_C) / n_W)
    return math.ceil(2.0 / q + 1.0)


def q_from_cw(CW: int) -> float:
    return 2.0 / (CW - 1)


def rho_from_cw(CW: int, n_W: int) -> float:
    return (1.0 - q_from_cw(CW)) ** n_W


def q_L_from_rho(rho_A: float) -> float:
    return 1.0 - rho_A


def mapped_system(CW: int, q_L: float, n_W: int, l_W: int, S: int) -> SystemConfig:
    return SystemConfig(n_A=1, n_C=n_W, q_A=q_L, q_C=min(1.0, q_from_cw(CW)), S=S, l_C=l_W)


@lru_cache(maxsize=64)
def derive_deployment(inp: DeploymentInput) -> DeploymentConfig:
    """Optimal (CW, q_L, l_W) for the deployment; raises on infeasibility."""
    hi = inp.l_W_max if inp.l_W_max is not None else 3 * inp.S
    # packets must outlast the failure overhead to be representable in the simulator
    cands = [inp.l_W_fixed] if inp.l_W_fixed else list(range(FAIL_OVERHEAD + 1, hi + 1))
    spec = OptimizationSpec(gamma=inp.gamma, n_A=1, n_C=inp.n_W, S=inp.S, l_C_candidates=cands)
    res = optimize(spec)
    if not res.feasible:
        raise OptimizationError(f"no feasible configuration for {inp}")
    CW = cw_from_rho(res.rho_C_opt, inp.n_W)
    q_L = q_L_from_rho(res.rho_A_opt)
    report = throughput_report(mapped_system(CW, q_L, inp.n_W, res.l_C_opt, inp.S))
    return DeploymentConfig(inp.n_W, inp.gamma, inp.S, CW, q_L, res.l_C_opt,
                            res.rho_A_opt, res.rho_C_opt, res.lambda_max, report)


@dataclass
class SweepRow:
    parameter: float
    lambda_A: float
    lambda_C: float
    lambda_total: float
    ratio: float
    method: str
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)


def rows_to_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        d = r.to_dict()
        w.writerow(["" if d[c] is None else d[c] for c in SWEEP_COLUMNS])
    return buf.getvalue()


def _ratio(a, c):
    return a / c if c > 0 else math.inf


def simulate_row(cfg: DeploymentConfig, parameter, *, n_W=None, l_W=None, T=10**8, seed=0) -> SweepRow:
    res = run(SimConfig(cfg.wifi_lte(n_W=n_W, l_W=l_W), T, seed))
    return SweepRow(parameter, res.lambda_A_hat, res.lambda_C_hat, res.lambda_total,
                    _ratio(res.lambda_A_hat, res.lambda_C_hat), "simulation", seed)


def analytic_row(cfg: DeploymentConfig, parameter, *, n_W=None, l_W=None) -> SweepRow:
    rep = throughput_report(mapped_system(cfg.CW_opt, cfg.q_L_opt, n_W or cfg.n_W,
                                          l_W or cfg.l_W_opt, cfg.S))
    return SweepRow(parameter, rep.lambda_A, rep.lambda_C, rep.lambda_total,
                    _ratio(rep.lambda_A, rep.lambda_C), "analytic")


def robustness_lw(cfg: DeploymentConfig, l_W_values: Sequence[int], T: int = 10**8, seed: int = 0,
                  analytic: bool = True) -> list[SweepRow]:
    """Hold (CW, q_L) at their optimum and let the actual WiFi packet length vary."""
    rows = []
    for l_W in l_W_values:
        if not FAIL_OVERHEAD < l_W <= cfg.S:
            raise ValueError(f"l_W={l_W} outside ({FAIL_OVERHEAD}, {cfg.S}]")
        rows.append(simulate_row(cfg, l_W, l_W=l_W, T=T, seed=seed))
        if analytic:
            rows.append(analytic_row(cfg, l_W, l_W=l_W))
    return rows


def robustness_nw(cfg: DeploymentConfig, n_W_values: Sequence[int], T: int = 10**8, seed: int = 0,
                  analytic: bool = True) -> list[SweepRow]:
    """Hold parameters derived for ``cfg.n_W`` and vary the true WiFi population."""
    rows = []
    for n in n_W_values:
        if n < 1:
            raise ValueError("n_W must be >= 1")
        rows.append(simulate_row(cfg, n, n_W=n, T=T, seed=seed))
        if analytic:
            rows.append(analytic_row(cfg, n, n_W=n))
    return rows
