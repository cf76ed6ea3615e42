"""Mini-slot discrete-event simulator for coexisting slotted Aloha and CSMA networks.

Time advances slot by slot. Inside a slot the simulator jumps straight to the
next CSMA start, so idle stretches cost nothing. Every random draw comes from
a counter-based generator (splitmix64) keyed per node, which makes a node's
decisions independent of the order in which events are processed.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numba
import numpy as np

from .model import ModelError, SystemConfig

GENERIC = "generic"
WIFI_LTE = "wifi-lte"

_GEOMETRIC = 0
_UNIFORM = 1

_NEVER = np.int64(1) << np.int64(62)

# trace columns
TRACE_FIELDS = ("kind", "start", "end", "k", "success")
KIND_ALOHA = 0
KIND_CSMA = 1


@dataclass(frozen=True)
class WifiLteConfig:
    """One LTE-U eNB (a single Aloha node) sharing the channel with a K=0 DCF WiFi network."""

    n_W: int
    CW: int
    l_W: int
    q_L: float
    S: int = 112
    K: int = 0
    fail_overhead: int = 6
    backoff_inclusive: bool = True  # counter drawn from {0..CW}; False gives {0..CW-1}

    def __post_init__(self):
        if self.n_W < 1:
            raise ModelError("n_W must be >= 1")
        if self.CW < 2:
            raise ModelError("CW must be >= 2")
        if self.K != 0:
            raise ModelError("only K = 0 (no window doubling) is supported")
        if not 0.0 <= self.q_L <= 1.0:
            raise ModelError("q_L must lie in [0, 1]")
        if self.S < 1:
            raise ModelError("S must be >= 1")
        if self.l_W <= self.fail_overhead:
            raise ModelError("l_W must exceed the failure overhead")

    @property
    def q_C(self) -> float:
        return min(1.0, 2.0 / (self.CW - 1))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimConfig:
    system: Union[SystemConfig, WifiLteConfig]
    duration_T: int
    seed: int = 0
    mode: Optional[str] = None
    trace_cap: int = 0  # number of transmissions kept for trace/audit

    def __post_init__(self):
        if self.duration_T < 1:
            raise ModelError("duration_T must be >= 1")
        inferred = WIFI_LTE if isinstance(self.system, WifiLteConfig) else GENERIC
        if self.mode is None:
            object.__setattr__(self, "mode", inferred)
        elif self.mode != inferred:
            raise ModelError(f"mode {self.mode!r} does not match system type ({inferred})")
        if not 0 <= int(self.seed) < 2**64:
            raise ModelError("seed must be a 64-bit unsigned integer")
        if self.trace_cap < 0:
            raise ModelError("trace_cap must be >= 0")

    def to_dict(self) -> dict:
        return {"system": self.system.to_dict(), "duration_T": self.duration_T,
                "seed": int(self.seed), "mode": self.mode}

    def config_hash(self) -> str:
        blob = json.dumps({"system": self.system.to_dict(), "duration_T": self.duration_T,
                           "mode": self.mode}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SimResult:
    N_success_A: int
    N_success_C: int
    lambda_A_hat: float
    lambda_C_hat: float
    collisions_A: int
    collisions_C: int
    idle_fraction: float
    idle_slots: int
    busy_slots: int
    tx_A: int
    tx_C: int
    duration_T: int
    seed: int
    mode: str
    config_hash: str
    trace: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ratio(self) -> float:
        return self.lambda_A_hat / self.lambda_C_hat if self.lambda_C_hat > 0 else math.inf

    @property
    def lambda_total(self) -> float:
        return self.lambda_A_hat + self.lambda_C_hat

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "trace"}
        if self.trace is not None:
            d["trace"] = [dict(zip(TRACE_FIELDS, map(int, row))) for row in self.trace]
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


CSV_FIELDS = ("seed", "mode", "duration_T", "N_success_A", "N_success_C", "lambda_A_hat",
              "lambda_C_hat", "collisions_A", "collisions_C", "idle_fraction", "config_hash")


def results_to_csv(results: Sequence[SimResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in results:
        d = r.to_dict()
        w.writerow([d[k] for k in CSV_FIELDS])
    return buf.getvalue()


@dataclass
class SimError:
    index: int
    message: str


# ---------------------------------------------------------------- kernel

@numba.njit(cache=True, inline="always")
def _mix(x):
    # splitmix64 finalizer
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@numba.njit(cache=True, inline="always")
def _uniform(key, ctr):
    z = _mix(key + np.uint64(ctr) * np.uint64(0x9E3779B97F4A7C15))
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _draw_wait(key, ctr, kind, q, hi):
    """Eligible mini-slots a CSMA node waits before its next attempt."""
    u = _uniform(key, ctr)
    if kind == _UNIFORM:
        return np.int64(u * (hi + 1))
    if q >= 1.0:
        return np.int64(0)
    if q <= 0.0:
        return _NEVER
    g = math.floor(math.log1p(-u) / math.log1p(-q))
    if g > 1e18:
        return _NEVER
    return np.int64(g)


@numba.njit(cache=True)
def _aloha_count(keysA, q_A, slot):
    k = 0
    for i in range(keysA.shape[0]):
        if _uniform(keysA[i], slot) < q_A:
            k += 1
    return k


@numba.njit(cache=True)
def _clip(a, b, lo, hi):
    lo2 = a if a > lo else lo
    hi2 = b if b < hi else hi
    return hi2 - lo2 if hi2 > lo2 else 0


@numba.njit(cache=True)
def _simulate(T, S, q_A, keysA, q_C, keysC, kind, hi, len_ok, len_fail, trace_cap):
    n_C = keysC.shape[0]
    fire = np.empty(n_C, np.int64)
    ctr = np.zeros(n_C, np.int64)
    for i in range(n_C):
        fire[i] = _draw_wait(keysC[i], 0, kind, q_C, hi)
        ctr[i] = 1
    stats = np.zeros(8, np.int64)  # succA, succC, collA, collC, idle, busy, txA, txC
    trace = np.zeros((trace_cap, 5), np.int64)
    n_trace = 0

    E = np.int64(0)           # index of the next eligible mini-slot
    csma_end = np.int64(-1)   # exclusive end of the latest CSMA transmission
    prev_busy = False
    n_slots = (T + S - 1) // S
    for j in range(n_slots):
        s0 = np.int64(j) * S
        s1 = s0 + S
        c1 = s1 if s1 < T else np.int64(T)
        kA = _aloha_count(keysA, q_A, j)
        busy = kA > 0
        overlap = csma_end > s0
        covered = _clip(s0, csma_end, s0, c1)

        if busy:
            t = s0
            t_stop = s0 + 1 if (not prev_busy and s0 >= csma_end + 1) else s0
        else:
            t = s0 + 1 if prev_busy else s0
            if csma_end + 1 > t:
                t = csma_end + 1
            t_stop = s1
        while t < t_stop and t < T:
            F = _NEVER
            for i in range(n_C):
                if fire[i] < F:
                    F = fire[i]
            if F - E >= t_stop - t:
                E += t_stop - t
                break
            ts = t + (F - E)
            E = F + 1
            k = 0
            for i in range(n_C):
                if fire[i] == F:
                    k += 1
                    fire[i] = F + 1 + _draw_wait(keysC[i], ctr[i], kind, q_C, hi)
                    ctr[i] += 1
            # Aloha activity during [ts, ts + len_ok) decides the outcome
            hit = False
            for jj in range(ts // S, (ts + len_ok - 1) // S + 1):
                if jj == j:
                    if busy:
                        hit = True
                elif _aloha_count(keysA, q_A, jj) > 0:
                    hit = True
                if hit:
                    break
            ok = k == 1 and not hit
            csma_end = ts + (len_ok if ok else len_fail)
            if csma_end <= T:
                stats[7] += 1
                if ok:
                    stats[1] += 1
                else:
                    stats[3] += 1
            if n_trace < trace_cap:
                trace[n_trace, 0] = 1
                trace[n_trace, 1] = ts
                trace[n_trace, 2] = csma_end
                trace[n_trace, 3] = k
                trace[n_trace, 4] = 1 if ok else 0
                n_trace += 1
            overlap = True
            covered += _clip(ts, csma_end, s0, c1)
            t = csma_end + 1

        if busy:
            stats[5] += c1 - s0
            if s1 <= T:
                stats[6] += 1
                if kA == 1 and not overlap:
                    stats[0] += 1
                else:
                    stats[2] += 1
            if n_trace < trace_cap:
                trace[n_trace, 0] = 0
                trace[n_trace, 1] = s0
                trace[n_trace, 2] = s1
                trace[n_trace, 3] = kA
                trace[n_trace, 4] = 1 if (kA == 1 and not overlap) else 0
                n_trace += 1
        else:
            stats[5] += covered
            stats[4] += (c1 - s0) - covered
        prev_busy = busy
    return stats, trace[:n_trace]


# ---------------------------------------------------------------- driver

def _node_keys(seed: int, group: int, n: int) -> np.ndarray:
    keys = np.empty(n, np.uint64)
    for i in range(n):
        ss = np.random.SeedSequence(int(seed), spawn_key=(group, i))
        keys[i] = ss.generate_state(1, dtype=np.uint64)[0]
    return keys


def run(cfg: SimConfig) -> SimResult:
    """Simulate ``cfg.duration_T`` mini-slots. Deterministic for a fixed (config, seed)."""
    sysc = cfg.system
    T = int(cfg.duration_T)
    if cfg.mode == GENERIC:
        S, n_A, q_A, n_C, q_C = sysc.S, sysc.n_A, sysc.q_A, sysc.n_C, sysc.q_C
        kind, hi = _GEOMETRIC, 0
        len_ok = len_fail = sysc.l_C
    else:
        S, n_A, q_A, n_C, q_C = sysc.S, 1, sysc.q_L, sysc.n_W, sysc.q_C
        kind = _UNIFORM
        hi = sysc.CW if sysc.backoff_inclusive else sysc.CW - 1
        len_ok, len_fail = sysc.l_W, sysc.l_W - sysc.fail_overhead
    keysA = _node_keys(cfg.seed, 0, n_A)
    keysC = _node_keys(cfg.seed, 1, n_C)
    stats, trace = _simulate(np.int64(T), np.int64(S), float(q_A), keysA, float(q_C), keysC,
                             kind, np.int64(hi), np.int64(len_ok), np.int64(len_fail),
                             int(cfg.trace_cap))
    succA, succC, collA, collC, idle, busy, txA, txC = (int(x) for x in stats)
    return SimResult(
        N_success_A=succA, N_success_C=succC,
        lambda_A_hat=succA * S / T, lambda_C_hat=succC * len_ok / T,
        collisions_A=collA, collisions_C=collC,
        idle_fraction=idle / T, idle_slots=idle, busy_slots=busy,
        tx_A=txA, tx_C=txC, duration_T=T, seed=int(cfg.seed), mode=cfg.mode,
        config_hash=cfg.config_hash(),
        trace=trace if cfg.trace_cap else None,
    )


def run_batch(cfgs: Sequence[SimConfig]) -> list:
    """Run each config independently; a failing item yields a ``SimError`` in its place."""
    out: list = []
    for i, c in enumerate(cfgs):
        try:
            out.append(run(c))
        except Exception as exc:  # keep the rest of the batch going
            out.append(SimError(i, f"{type(exc).__name__}: {exc}"))
    return out


def batch_summary(results: Sequence[SimResult]) -> dict:
    """Mean and 95% normal CI half-width of the throughputs over a batch of seeds."""
    good = [r for r in results if isinstance(r, SimResult)]
    out = {"n": len(good)}
    for name in ("lambda_A_hat", "lambda_C_hat", "idle_fraction"):
        x = np.array([getattr(r, name) for r in good])
        out[name] = float(x.mean()) if len(x) else math.nan
        out[name + "_ci95"] = float(1.96 * x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan
    return out


def audit_trace(trace: np.ndarray) -> list[str]:
    """Check the recorded transmissions for overlaps that contradict their outcome.

    Returns a list of problems (empty when consistent). A transmission marked
    successful must have k == 1 and overlap no other recorded transmission;
    one marked failed must have k > 1 or some overlap.
    """
    problems = []
    if trace is None or len(trace) == 0:
        return problems
    order = np.argsort(trace[:, 1], kind="stable")
    tr = trace[order]
    n = len(tr)
    last = int(tr[-1, 1])
    for a in range(n):
        kind, s, e, k, ok = (int(x) for x in tr[a])
        if e > last:
            continue  # later overlaps may be missing from a truncated trace
        hits = 0
        b = a - 1
        while b >= 0 and a - b <= 64:  # earlier transmissions reaching past s
            if tr[b, 2] > s:
                hits += 1
            b -= 1
        b = a + 1
        while b < n and tr[b, 1] < e:
            hits += 1
            b += 1
        if ok and (k != 1 or hits):
            problems.append(f"success with overlap: {tr[a].tolist()}")
        if not ok and k == 1 and not hits and kind == KIND_ALOHA:
            problems.append(f"failure without cause: {tr[a].tolist()}")
    return problems
