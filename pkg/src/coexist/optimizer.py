"""Throughput maximization under a fixed Aloha/CSMA throughput proportion.

For each candidate CSMA packet length the equality constraint
``lambda_A / lambda_C = gamma`` is eliminated by solving for rho_C, which
leaves a one-dimensional search over rho_A.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.optimize.elementwise import find_root
from scipy.special import expit, lambertw, wrightomega

from .analytic import throughput_grid

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CLOSED_NA1 = "closed-form-nA1"
CLOSED_NA_LARGE = "closed-form-nA-large"

TIE_TOL = 1e-9
X_MAX = 12.0  # logit(rho_A) search range


class OptimizationError(RuntimeError):
    pass


def lambert_w0(x: float) -> float:
    """Principal branch of Lambert W for real ``x >= -1/e``."""
    if x < -1.0 / math.e:
        raise ValueError(f"lambert_w0 undefined for x={x} < -1/e")
    if x == -1.0 / math.e:
        return -1.0
    return float(lambertw(x, 0).real)


def lambert_w0_exp(x: float) -> float:
    """``W0(exp(x))`` without forming ``exp(x)``, so large ``x`` does not overflow."""
    return float(np.real(wrightomega(x)))


@dataclass(frozen=True)
class OptimizationSpec:
    gamma: float
    n_A: int
    n_C: int
    S: int
    l_C_candidates: Optional[Sequence[int]] = None
    n_grid: int = 40  # coarse points in log(-ln rho_C)
    G_min: float = 1e-6
    G_max: float = 30.0
    tol: float = 1e-9  # final search tolerance in log(-ln rho_C)
    ratio_tol: float = 1e-6
    exhaustive: bool = False  # refine every l_C instead of pruning by coarse value
    min_refine: int = 6

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be positive and finite")
        if self.S < 1 or self.n_A < 1 or self.n_C < 1:
            raise ValueError("S, n_A and n_C must be >= 1")
        if self.l_C_candidates is not None:
            cands = list(self.l_C_candidates)
            if not cands or min(cands) < 1:
                raise ValueError("l_C candidate set must be nonempty and positive")
        if self.n_grid < 3:
            raise ValueError("n_grid must be >= 3")

    def candidates(self) -> list[int]:
        if self.l_C_candidates is None:
            return list(range(1, 3 * self.S + 1))
        return sorted(set(int(c) for c in self.l_C_candidates))


@dataclass
class OptimizationResult:
    gamma: float
    rho_A_opt: float
    rho_C_opt: float
    l_C_opt: int
    lambda_max: float
    achieved_ratio: float
    method: str
    feasible: bool = True
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return d

    @classmethod
    def infeasible(cls, gamma, method=NUMERIC, **diag):
        nan = float("nan")
        return cls(gamma, nan, nan, 0, nan, nan, method, False, diag)


class _Objective:
    """Throughputs for one (n_A, n_C, S, l_C) as functions of (rho_A, rho_C)."""

    # log-spaced grid over G = -ln(rho_C); small G means rho_C close to 1
    G_SCAN = np.geomspace(1e-9, 60.0, 64)

    def __init__(self, gamma, n_A, n_C, S, l_C):
        self.gamma, self.n_A, self.n_C, self.S, self.l_C = gamma, n_A, n_C, S, l_C
        self.evals = 0

    def lam(self, rho_A, rho_C):
        self.evals += max(np.size(rho_A), np.size(rho_C))
        la, lc, _ = throughput_grid(rho_A, rho_C, self.n_A, self.n_C, self.S, self.l_C)
        return la, lc

    def gap_G(self, rho_A, G):
        la, lc = self.lam(rho_A, np.exp(-G))
        return la - self.gamma * lc

    def gap_x(self, x, G):
        # x is logit(rho_A)
        la, lc = self.lam(expit(x), np.exp(-G))
        return la - self.gamma * lc

    def root_G(self, rho_A, rtol=1e-13):
        """Smallest G (rho_C closest to 1) where the ratio drops to gamma, or None."""
        f = self.gap_G(rho_A, self.G_SCAN)
        neg = np.nonzero(f < 0)[0]
        if len(neg) == 0 or neg[0] == 0:
            return None
        i = neg[0]
        if np.any(f[i:] > 0):
            log.debug("ratio not monotone in rho_C at rho_A=%g l_C=%d; taking the first crossing",
                      rho_A, self.l_C)
        return brentq(lambda G: float(self.gap_G(rho_A, G)), self.G_SCAN[i - 1], self.G_SCAN[i],
                      xtol=1e-300, rtol=rtol)

    def solve_x(self, G):
        """logit(rho_A) meeting the ratio at each G (nan where unattainable).

        The ratio falls strictly as rho_A grows, so each rho_C admits at most
        one rho_A and a sign check at the ends of the range decides feasibility.
        """
        G = np.atleast_1d(np.asarray(G, float))
        x = np.full(G.shape, np.nan)
        lo = np.full(G.shape, -X_MAX)
        hi = np.full(G.shape, X_MAX)
        ok = (self.gap_x(lo, G) > 0) & (self.gap_x(hi, G) < 0)
        if ok.any():
            res = find_root(self.gap_x, (lo[ok], hi[ok]), args=(G[ok],),
                            tolerances=dict(xatol=1e-13, xrtol=1e-15, fatol=0.0, frtol=0.0))
            x[ok] = res.x
        return x

    def value(self, G):
        """Total throughput on the constraint at each G; -inf where unattainable."""
        G = np.atleast_1d(np.asarray(G, float))
        x = self.solve_x(G)
        out = np.full(G.shape, -math.inf)
        ok = np.isfinite(x)
        if ok.any():
            _, lc = self.lam(expit(x[ok]), np.exp(-G[ok]))
            out[ok] = (1 + self.gamma) * lc
        return out, x


def ratio_solve_rhoC(gamma: float, rho_A: float, l_C: int, n_A: int, n_C: int, S: int) -> Optional[float]:
    """rho_C in (0, 1) giving ``lambda_A / lambda_C = gamma``, or None if unattainable.

    When several values satisfy the ratio the one closest to 1 is returned.
    """
    if not 0 < rho_A < 1:
        raise ValueError("rho_A must lie in (0, 1)")
    G = _Objective(gamma, n_A, n_C, S, l_C).root_G(rho_A)
    return None if G is None else math.exp(-G)


def _peak_estimate(u, vals) -> float:
    """Parabolic estimate of the maximum around the best grid point."""
    i = int(np.argmax(vals))
    v = float(vals[i])
    if 0 < i < len(vals) - 1 and np.isfinite(vals[i - 1]) and np.isfinite(vals[i + 1]):
        curv = vals[i + 1] - 2 * v + vals[i - 1]
        if curv < 0:
            return v - (vals[i + 1] - vals[i - 1]) ** 2 / (8 * curv)
    return v


def _refine(obj: _Objective, u, vals, tol):
    """Bounded scalar search in log G around the best grid cell."""
    i = int(np.argmax(vals))
    step = u[1] - u[0]
    lo, hi = u[i] - step, u[i] + step

    def neg(t):
        v, _ = obj.value(math.exp(t))
        return -float(v[0]) if np.isfinite(v[0]) else 1.0

    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    cands = [float(u[i]), float(res.x)]
    best = None
    for t in cands:
        v, x = obj.value(math.exp(t))
        if np.isfinite(v[0]) and (best is None or v[0] > best[0]):
            best = (float(v[0]), float(expit(x[0])), math.exp(t))
    return best


def optimize(spec: OptimizationSpec) -> OptimizationResult:
    """Maximize total throughput over (rho_A, rho_C, l_C) subject to the ratio constraint.

    The ratio falls strictly in rho_A, so the constraint fixes rho_A as a
    function of rho_C and the problem becomes a line search in rho_C for each
    l_C. Every candidate gets a coarse pass on a log grid of -ln(rho_C);
    candidates are then refined in order of a parabolic peak estimate and
    refinement stops once no remaining estimate can plausibly beat the best
    refined value (unless ``spec.exhaustive``).
    """
    u = np.linspace(math.log(spec.G_min), math.log(spec.G_max), spec.n_grid)
    coarse = {}
    evals = 0
    for l_C in spec.candidates():
        obj = _Objective(spec.gamma, spec.n_A, spec.n_C, spec.S, l_C)
        vals, _ = obj.value(np.exp(u))
        coarse[l_C] = (obj, vals)
        evals += obj.evals
    est = {l: _peak_estimate(u, v[1]) for l, v in coarse.items() if np.isfinite(v[1]).any()}
    order = sorted(est, key=lambda l: (-est[l], l))
    if not order:
        return OptimizationResult.infeasible(spec.gamma, candidates=len(coarse), evaluations=evals)

    refined = {}
    max_err = 0.0
    for k, l_C in enumerate(order):
        obj, vals = coarse[l_C]
        c = est[l_C]
        if not spec.exhaustive and k >= spec.min_refine and refined:
            top = max(v[0] for v in refined.values())
            if c + 3 * max_err + 1e-6 < top:
                break
        before = obj.evals
        refined[l_C] = _refine(obj, u, vals, spec.tol)
        evals += obj.evals - before
        max_err = max(max_err, abs(refined[l_C][0] - c))

    top = max(v[0] for v in refined.values())
    l_best = min(l for l, v in refined.items() if v[0] >= top - TIE_TOL)
    _, rho_A, G = refined[l_best]
    rho_C = math.exp(-G)
    la, lc, _ = throughput_grid(rho_A, rho_C, spec.n_A, spec.n_C, spec.S, l_best)
    ratio = float(la) / float(lc)
    if abs(ratio - spec.gamma) > spec.ratio_tol * spec.gamma:
        raise OptimizationError(f"ratio constraint violated at optimum: {ratio} vs {spec.gamma}")
    diag = {
        "candidates": len(coarse),
        "refined": sorted(refined),
        "evaluations": int(evals),
        "per_l_C": {int(l): float(v[0]) for l, v in sorted(refined.items())},
    }
    return OptimizationResult(spec.gamma, rho_A, rho_C, l_best, float(la + lc), ratio, NUMERIC, True, diag)


# closed forms for l_C = S under the rho_C ~ 1 approximation

def _na1_equation(rho_A, gamma, S, printed):
    a = 1.0 / S
    W = lambert_w0_exp(S * (1 - rho_A))
    if printed:
        inner = 1 - (1 - rho_A) * (1 - W) ** S
    else:
        rho_C = a * W / (1 - rho_A)
        inner = 1 - (1 - (1 - rho_A) * (1 - rho_C)) ** S
    return a * gamma * rho_A**2 * W * inner - (1 - rho_A) ** 3


def _na1_lambda(rho_A, gamma):
    return (1 + gamma) * (1 - rho_A) * rho_A / (rho_A * (gamma - 1) + 1)


def closed_form_optimum(gamma: float, regime: str, S: int, printed: bool = False,
                        scan_points: int = 4000) -> OptimizationResult:
    """Approximate optimum for l_C = S.

    ``regime`` is ``"nA1"`` (single Aloha node) or ``"nAlarge"`` (many Aloha
    nodes). For ``"nA1"`` rho_A is a root of a transcendental equation. With
    ``printed=True`` the equation is evaluated with the Lambert term in place
    of rho_C inside the power, exactly as typeset; the default substitutes
    rho_C, which is what the constraint reduces to.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    a = 1.0 / S
    if regime in ("nAlarge", "nA-large", CLOSED_NA_LARGE):
        s = math.sqrt(gamma * gamma + 4 * gamma)
        rho_A = math.exp(0.5 * (gamma - s))
        inner = 1 + 0.5 * (1 - math.sqrt(1 + 4 / gamma)) * math.expm1(0.5 * (s - gamma))
        rho_C = 1 + a * math.log(inner) / (1 - rho_A)
        lam = (1 + gamma) * (s - gamma) * rho_A / (s + gamma)
        return OptimizationResult(gamma, rho_A, rho_C, S, lam, gamma, CLOSED_NA_LARGE)
    if regime not in ("nA1", CLOSED_NA1):
        raise ValueError(f"unknown regime {regime!r}")

    xs = np.linspace(0, 1, scan_points + 1)[1:-1]
    with np.errstate(all="ignore"):
        f = np.array([_na1_equation(x, gamma, S, printed) for x in xs])
    ok = np.isfinite(f)
    idx = [i for i in range(len(xs) - 1) if ok[i] and ok[i + 1] and np.sign(f[i]) != np.sign(f[i + 1])]
    if not idx:
        raise OptimizationError(
            f"no root of the single-node equation in (0,1) for gamma={gamma}, S={S}, printed={printed}; "
            f"f ranges over [{np.nanmin(f[ok]) if ok.any() else 'nan'}, {np.nanmax(f[ok]) if ok.any() else 'nan'}]")
    roots = [brentq(_na1_equation, xs[i], xs[i + 1], args=(gamma, S, printed), xtol=1e-15) for i in idx]
    rho_A = max(roots, key=lambda r: _na1_lambda(r, gamma))
    rho_C = a * lambert_w0_exp(S * (1 - rho_A)) / (1 - rho_A)
    diag = {"roots": roots, "printed": printed}
    return OptimizationResult(gamma, rho_A, rho_C, S, _na1_lambda(rho_A, gamma), gamma, CLOSED_NA1, True, diag)
