"""Dual-channel Markov renewal model of coexisting slotted Aloha and CSMA.

Time is measured in mini-slots; an Aloha time slot spans ``S`` mini-slots.
A state ``(x_A, x_C, d)`` records the Aloha channel status, the CSMA channel
status and the offset ``d`` between the start of the current CSMA-channel
state and the start of the current Aloha slot.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

PROB_TOL = 1e-10
LINALG_TOL = 1e-12


class ModelError(ValueError):
    """Invalid configuration or chain construction failure."""


class ModelConsistencyError(RuntimeError):
    """A derived identity disagrees with the directly solved chain."""


@dataclass(frozen=True)
class SystemConfig:
    """One coexistence scenario.

    ``S`` is the number of mini-slots per Aloha slot (``a = 1/S``) and
    ``l_C`` the CSMA packet length in mini-slots.
    """

    n_A: int
    n_C: int
    q_A: float
    q_C: float
    S: int
    l_C: int

    def __post_init__(self):
        for name in ("n_A", "n_C", "S", "l_C"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ModelError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.n_A < 0 or self.n_C < 0:
            raise ModelError("node counts must be non-negative")
        if self.n_A + self.n_C < 1:
            raise ModelError("at least one node is required")
        if self.S < 1:
            raise ModelError("S must be >= 1")
        if self.l_C < 1:
            raise ModelError("l_C must be >= 1")
        for name in ("q_A", "q_C"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ModelError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)

    @property
    def a(self) -> float:
        return 1.0 / self.S

    @property
    def is_integer_multiple(self) -> bool:
        return self.l_C % self.S == 0

    @classmethod
    def from_rho(cls, n_A, n_C, rho_A, rho_C, S, l_C):
        """Build a config from idle probabilities, inverting ``rho = (1-q)^n``."""
        return cls(n_A, n_C, q_from_rho(rho_A, n_A), q_from_rho(rho_C, n_C), S, l_C)

    def to_dict(self) -> dict:
        return {"n_A": self.n_A, "n_C": self.n_C, "q_A": self.q_A,
                "q_C": self.q_C, "S": self.S, "l_C": self.l_C}


def q_from_rho(rho: float, n: int) -> float:
    if not 0.0 <= rho <= 1.0:
        raise ModelError(f"rho must lie in [0, 1], got {rho}")
    if n == 0:
        if rho != 1.0:
            raise ModelError("an empty network has rho = 1")
        return 0.0
    return float(-np.expm1(np.log(rho) / n)) if rho > 0 else 1.0


@dataclass(frozen=True)
class DerivedRates:
    rho_A: float
    rho_C: float
    Phi: float
    f: float


def derive_rates(cfg: SystemConfig) -> DerivedRates:
    rho_A = (1.0 - cfg.q_A) ** cfg.n_A
    rho_C = (1.0 - cfg.q_C) ** cfg.n_C
    f = rho_C + rho_A - rho_C * rho_A
    return DerivedRates(rho_A=rho_A, rho_C=rho_C, Phi=f ** cfg.S, f=f)


class ChannelStatus(str, Enum):
    IDLE = "I"
    BUSY = "B"

    def __str__(self):
        return self.value


I = ChannelStatus.IDLE
B = ChannelStatus.BUSY


@dataclass(frozen=True, order=False)
class ChainState:
    x_A: ChannelStatus
    x_C: ChannelStatus
    d: int

    def __str__(self):
        return f"({self.x_A},{self.x_C},{self.d})"

    @property
    def start_phase(self) -> int:
        """Mini-slot phase within the Aloha slot at which this state begins."""
        return max(self.d, 0)


def _check_state(state: ChainState, cfg: SystemConfig) -> None:
    S, l_C = cfg.S, cfg.l_C
    if state.x_C is I:
        ok = 0 <= state.d <= S - 1
    else:
        ok = -(l_C - 1) <= state.d <= S - 1
    if not ok:
        raise ModelError(f"offset d={state.d} is out of range for {state} (S={S}, l_C={l_C})")


def holding_time(state: ChainState, cfg: SystemConfig) -> int:
    """Mini-slots spent in ``state`` before the next transition epoch."""
    _check_state(state, cfg)
    if state.x_C is I:
        return 1
    S, l_C, d = cfg.S, cfg.l_C, state.d
    if l_C <= S:
        if d > S - l_C:
            return S - d
        if d > 0:
            return l_C
        return l_C + d
    if d >= 0:
        return S - d
    if d >= S - l_C:
        return S
    return l_C + d


@dataclass(frozen=True)
class EmbeddedChain:
    states: List[ChainState]
    P: np.ndarray
    tau: np.ndarray
    pi: np.ndarray
    pi_tilde: np.ndarray
    index: Dict[ChainState, int] = field(repr=False, compare=False, default_factory=dict)

    def prob(self, state: ChainState, limiting: bool = True) -> float:
        """Probability of ``state``; zero for unreachable states."""
        i = self.index.get(state)
        if i is None:
            return 0.0
        return float(self.pi_tilde[i] if limiting else self.pi[i])

    def to_dict(self) -> dict:
        return {
            "states": [str(s) for s in self.states],
            "P": self.P.tolist(),
            "tau": self.tau.tolist(),
            "pi": self.pi.tolist(),
            "pi_tilde": self.pi_tilde.tolist(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _successors(state: ChainState, cfg: SystemConfig, rates: DerivedRates):
    """Yield ``(next_state, probability)`` pairs, omitting zero-probability moves."""
    S, l_C = cfg.S, cfg.l_C
    rho_A, rho_C = rates.rho_A, rates.rho_C
    p = state.start_phase
    end = p + holding_time(state, cfg)
    out: Dict[ChainState, float] = {}

    def add(nxt, prob):
        if prob > 0.0:
            out[nxt] = out.get(nxt, 0.0) + prob

    if end == S:
        aloha = ((I, rho_A), (B, 1.0 - rho_A))
        if state.x_C is B and state.d + l_C > S:
            for xa, pa in aloha:
                add(ChainState(xa, B, state.d - S), pa)
        elif state.x_A is I and state.x_C is I:
            # previous mini-slot idle on both channels: CSMA may start
            for xa, pa in aloha:
                add(ChainState(xa, I, 0), pa * rho_C)
                add(ChainState(xa, B, 0), pa * (1.0 - rho_C))
        else:
            for xa, pa in aloha:
                add(ChainState(xa, I, 0), pa)
    elif state.x_C is B:
        add(ChainState(state.x_A, I, end), 1.0)
    elif state.x_A is I:
        add(ChainState(I, I, end), rho_C)
        add(ChainState(I, B, end), 1.0 - rho_C)
    else:
        add(ChainState(B, I, end), 1.0)
    return out.items()


def default_state_cap(cfg: SystemConfig) -> int:
    return 10 * cfg.S * (cfg.S + cfg.l_C)


def stationary_distribution(P) -> np.ndarray:
    """Solve ``pi P = pi`` with ``sum(pi) = 1`` by a direct linear solve."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.ndim != 2 or P.shape[1] != n:
        raise ModelError("transition matrix must be square")
    M = P.T - np.eye(n)
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise ModelError("singular stationary system; chain is reducible") from exc
    if not np.all(np.isfinite(pi)):
        raise ModelError("singular stationary system; chain is reducible")
    residual = np.max(np.abs(pi @ P - pi))
    if residual > LINALG_TOL * max(1.0, n):
        raise ModelError(f"stationary residual {residual:.3e} too large; chain is reducible?")
    return pi


def limiting_distribution(chain_or_pi, tau=None) -> np.ndarray:
    """Time-weighted renormalisation of the embedded distribution."""
    if tau is None:
        pi, tau = chain_or_pi.pi, chain_or_pi.tau
    else:
        pi = chain_or_pi
    w = np.asarray(pi, dtype=float) * np.asarray(tau, dtype=float)
    return w / w.sum()


def enumerate_chain(cfg: SystemConfig, max_states: Optional[int] = None) -> EmbeddedChain:
    """Breadth-first closure of the embedded chain from ``(I, I, 0)``."""
    rates = derive_rates(cfg)
    cap = default_state_cap(cfg) if max_states is None else max_states
    start = ChainState(I, I, 0)
    index = {start: 0}
    states = [start]
    arcs = []
    queue = deque([start])
    while queue:
        s = queue.popleft()
        for nxt, prob in _successors(s, cfg, rates):
            if nxt not in index:
                if len(states) >= cap:
                    raise ModelError(f"state space exceeds cap of {cap} states")
                _check_state(nxt, cfg)
                index[nxt] = len(states)
                states.append(nxt)
                queue.append(nxt)
            arcs.append((index[s], index[nxt], prob))

    n = len(states)
    P = np.zeros((n, n))
    for i, j, prob in arcs:
        P[i, j] += prob
    rows = P.sum(axis=1)
    if np.max(np.abs(rows - 1.0)) > LINALG_TOL:
        raise ModelError("transition rows do not sum to one")
    n_comp, _ = connected_components(csr_matrix(P > 0), directed=True, connection="strong")
    if n_comp != 1:
        raise ModelError(f"embedded chain is not irreducible ({n_comp} classes)")

    tau = np.array([holding_time(s, cfg) for s in states], dtype=float)
    pi = stationary_distribution(P)
    pi_tilde = limiting_distribution(pi, tau)
    return EmbeddedChain(states, P, tau, pi, pi_tilde, index)


def wrap_index(D: int, S: int) -> int:
    """Phase of the idle state preceding a CSMA start recorded with offset ``D <= 0``."""
    return (D - 1) % S


def busy_from_idle(chain: EmbeddedChain, cfg: SystemConfig, tol: float = PROB_TOL) -> Dict[ChainState, float]:
    """Limiting probabilities of busy states rebuilt from idle-state probabilities.

    Each rebuilt value is checked against the directly solved chain and a
    :class:`ModelConsistencyError` is raised on mismatch.
    """
    rates = derive_rates(cfg)
    S, l_C = cfg.S, cfg.l_C
    rho_A, rho_C = rates.rho_A, rates.rho_C
    y = np.array([chain.prob(ChainState(I, I, d)) for d in range(S)])

    rebuilt: Dict[ChainState, float] = {}
    for D in range(-(l_C - 1), S):
        st = ChainState(I, B, D)
        # idle states have unit holding time, so y also holds pi/T for them
        if D > 0:
            visits = (1.0 - rho_C) * y[D - 1]
        else:
            visits = rho_A * (1.0 - rho_C) * y[wrap_index(D, S)]
        rebuilt[st] = visits * holding_time(st, cfg)
    for D in range(-(l_C - 1), 1):
        st = ChainState(B, B, D)
        visits = (1.0 - rho_A) * (1.0 - rho_C) * y[wrap_index(D, S)]
        rebuilt[st] = visits * holding_time(st, cfg)

    for k in range(S):
        at_phase = y[k]
        for D in range(-(l_C - 1), S):
            for xa in (I, B):
                st = ChainState(xa, B, D)
                if st not in rebuilt or not _covers_phase(st, cfg, k):
                    continue
                at_phase += rebuilt[st] / holding_time(st, cfg)
        # (B, I, j) states with j != k never occupy phase k
        rebuilt[ChainState(B, I, k)] = 1.0 / S - at_phase

    for st, value in rebuilt.items():
        direct = chain.prob(st)
        if abs(direct - value) > tol:
            raise ModelConsistencyError(
                f"busy-state identity failed for {st}: rebuilt {value:.15g}, chain {direct:.15g}")
    return rebuilt


def _covers_phase(state: ChainState, cfg: SystemConfig, k: int) -> bool:
    start = state.start_phase
    return start <= k < start + holding_time(state, cfg)
