"""Parameter-space classification against the sufficient conditions.

Each classifier returns a RegimeReport whose entries carry both evaluated
sides of every inequality, so a verdict can be audited without rerunning
anything. Strict hypotheses fail on ties; non-strict ones hold on ties,
and ties are flagged in the entry note.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Field, Params
from .diagnostics import ConcavityConfig, check_gG, energy_E, kaplan_threshold, kaplan_tstar
from .eigen import NeumannSpectrum


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"
    NOT_EVALUATED = "not evaluated"


@dataclass
class RegimeEntry:
    name: str
    lhs: float
    rhs: float
    relation: str
    verdict: Verdict
    hypothesis: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d


@dataclass
class RegimeReport:
    theorem: str
    entries: list[RegimeEntry] = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def verdict(self) -> Verdict:
        """FAILS if any evaluated entry fails, else INCONCLUSIVE if any is, else HOLDS."""
        vs = [e.verdict for e in self.entries if e.verdict is not Verdict.NOT_EVALUATED]
        if any(v is Verdict.FAILS for v in vs):
            return Verdict.FAILS
        if any(v is Verdict.INCONCLUSIVE for v in vs):
            return Verdict.INCONCLUSIVE
        return Verdict.HOLDS

    def entry(self, name: str) -> RegimeEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "verdict": self.verdict.value,
                "entries": [e.to_dict() for e in self.entries],
                "extras": self.extras, "notes": list(self.notes)}


def _compare(lhs: float, rhs: float, strict: bool) -> tuple[Verdict, str]:
    if lhs == rhs:
        return (Verdict.FAILS if strict else Verdict.HOLDS), "boundary case (equality)"
    ok = lhs < rhs
    return (Verdict.HOLDS if ok else Verdict.FAILS), ""


def _coeffs(p: Params) -> dict:
    return {"a": p.a, "b": p.b, "c": p.c, "d": p.d, "n": p.n}


# ---------------------------------------------------------------- global existence


def classify_global(p: Params, u0_max: float) -> RegimeReport:
    """Global existence: max u0 < a/(2b) and c/d < a/(2b).

    Conventions for d = 0: c <= 0 reads as c/d = -inf (no reaction or pure
    decay), c > 0 is inconclusive. For d < 0 the logistic term is not a
    damping and the invariant-region argument does not apply, so the
    comparison is reported but the verdict is inconclusive.
    """
    rep = RegimeReport("global existence")
    k = p.u_crit
    v, note = _compare(u0_max, k, strict=True)
    rep.entries.append(RegimeEntry("max u0 < a/(2b)", u0_max, k, "<", v, _coeffs(p), note))
    if p.d == 0:
        if p.c <= 0:
            rep.entries.append(RegimeEntry("c/d < a/(2b)", -math.inf, k, "<", Verdict.HOLDS,
                                           _coeffs(p), "d = 0 and c <= 0: c/d taken as -inf"))
        else:
            rep.entries.append(RegimeEntry("c/d < a/(2b)", math.inf, k, "<", Verdict.INCONCLUSIVE,
                                           _coeffs(p), "d = 0 with c > 0: unbounded growth, no cap"))
    else:
        ratio = p.c / p.d
        v, note = _compare(ratio, k, strict=True)
        if p.d < 0:
            v = Verdict.INCONCLUSIVE
            note = "d < 0: the logistic term does not damp large densities"
        rep.entries.append(RegimeEntry("c/d < a/(2b)", ratio, k, "<", v, _coeffs(p), note))
    return rep


# ---------------------------------------------------------------- Kaplan


def classify_kaplan(p: Params, mu: float, A0: float) -> RegimeReport:
    """Blow-up by the eigenfunction method: mu b > d and A0 > threshold."""
    rep = RegimeReport("eigenfunction blow-up")
    beta = mu * p.b - p.d
    hyp = dict(_coeffs(p), mu=mu, A0=A0)
    if not beta > 0:
        rep.entries.append(RegimeEntry("mu b > d", mu * p.b, p.d, ">", Verdict.INCONCLUSIVE, hyp,
                                       "hypothesis fails; the method gives no information"))
        return rep
    rep.entries.append(RegimeEntry("mu b > d", mu * p.b, p.d, ">", Verdict.HOLDS, hyp))
    thr = kaplan_threshold(p, mu)
    v, note = _compare(thr, A0, strict=True)
    rep.entries.append(RegimeEntry("A0 > max(mu a - c, 0)/(mu b - d)", A0, thr, ">", v, hyp, note))
    if v is Verdict.HOLDS:
        rep.extras["t_star"] = kaplan_tstar(p, mu, A0)
    return rep


# ---------------------------------------------------------------- concavity


def concavity_c_bound(p: Params) -> float:
    """min(ad/b, ad/(2b)); for m = 2 the sign condition on h holds iff c <= this."""
    return min(p.a * p.d / p.b, p.a * p.d / (2.0 * p.b))


def classify_concavity(p: Params, v0: Field, m: float = 2.0) -> RegimeReport:
    """Blow-up by the concavity method.

    For m = 2 the sign condition s^m h(s) >= 2 H(s) is decided in closed
    form by c <= min(ad/b, ad/(2b)); for other m it is sampled on
    [0, 10 max v0] with check_gG.
    """
    rep = RegimeReport("concavity blow-up")
    hyp = dict(_coeffs(p), m=m)
    cfg = ConcavityConfig(m=m, params=p)
    if m == 2:
        bound = concavity_c_bound(p)
        v, note = _compare(p.c, bound, strict=False)
        rep.entries.append(RegimeEntry("c <= min(ad/b, ad/(2b))", p.c, bound, "<=", v, hyp, note))
    else:
        s_max = max(10.0 * float(np.max(v0.values)), 1.0)
        gg = check_gG(cfg, s_max)
        v = Verdict.HOLDS if gg.holds else Verdict.FAILS
        rep.entries.append(RegimeEntry("s^m h(s) >= 2 H(s) (sampled)", gg.min_value, 0.0, ">=", v,
                                       hyp, f"sampled on [0, {s_max:g}]"))
    vals = v0.values if v0.tag == "v" else v0.values - p.u_crit
    vmin = float(np.min(vals))
    v, note = _compare(-vmin, 0.0, strict=False)
    rep.entries.append(RegimeEntry("v0 >= 0", vmin, 0.0, ">=", v, hyp, note))
    if vmin >= 0:
        E0 = energy_E(v0, cfg, p)
        v, note = _compare(-E0, 0.0, strict=True)
        rep.entries.append(RegimeEntry("E(0) > 0", E0, 0.0, ">", v, hyp, note))
    else:
        rep.entries.append(RegimeEntry("E(0) > 0", math.nan, 0.0, ">", Verdict.NOT_EVALUATED, hyp,
                                       "E(0) is only defined for v0 >= 0"))
    return rep


# ---------------------------------------------------------------- steady states


def pohozaev_quadratic(p: Params) -> tuple[float, float, float]:
    """Coefficients (bd, B, ac) of q(s) = bd s^2 + B s + ac."""
    n = p.n
    B = ((n - 6) * p.a * p.d - (n + 6) * p.b * p.c) / 6.0
    return p.b * p.d, B, p.a * p.c


STRICTNESS_NOTE = ("the non-existence condition asks for strict inequality for all s >= 0, "
                   "but both sides vanish at s = 0; strictness is required only where the "
                   "right-hand side is nonzero")


def pohozaev_nonexistence(p: Params, star_shaped: bool = True) -> RegimeReport:
    """Exact decision of q(s) <= 0 on [0, inf), plus the quadratic corollary."""
    if p.n <= 2:
        raise ValueError(f"the non-existence result needs n > 2, got n = {p.n}")
    rep = RegimeReport("non-existence of steady states")
    rep.notes.append(STRICTNESS_NOTE)
    A2, B, C0 = pohozaev_quadratic(p)
    hyp = dict(_coeffs(p), q=[A2, B, C0])
    rep.extras["q_coefficients"] = {"s^2": A2, "s": B, "1": C0}

    rep.entries.append(RegimeEntry("domain star-shaped", float(star_shaped), 1.0, "==",
                                   Verdict.HOLDS if star_shaped else Verdict.INCONCLUSIVE, hyp,
                                   "asserted by the caller"))
    if A2 == 0 and B == 0 and C0 == 0:
        verdict, lhs, note = Verdict.INCONCLUSIVE, 0.0, "q vanishes identically; strictness unattainable"
    elif C0 > 0:
        verdict, lhs, note = Verdict.FAILS, C0, "q(0) = ac > 0"
    elif A2 > 0:
        verdict, lhs, note = Verdict.FAILS, math.inf, "leading coefficient bd > 0"
    elif A2 == 0:
        verdict = Verdict.HOLDS if B <= 0 else Verdict.FAILS
        lhs = 0.0 if B <= 0 else math.inf
        note = "linear q: holds iff slope <= 0"
    else:
        s_v = -B / (2.0 * A2)
        if s_v <= 0:
            lhs, note = C0, "vertex at s <= 0: max on [0, inf) is q(0)"
        else:
            # q(s_v) = ac - B^2/(4bd) = ac + B s_v / 2, without squaring B
            lhs, note = C0 + 0.5 * B * s_v, f"max at the vertex s = {s_v:.12g}"
        verdict = Verdict.HOLDS if lhs <= 0 else Verdict.FAILS
    rep.entries.append(RegimeEntry("max_{s>=0} q(s) <= 0", lhs, 0.0, "<=", verdict, hyp, note))

    # corollary: c, d <= 0 and (K <= 0 or 0 < K <= 12 sqrt(abcd)), K = ad(n-6) - bc(n+6)
    K = p.a * p.d * (p.n - 6) - p.b * p.c * (p.n + 6)
    if p.c <= 0 and p.d <= 0:
        root = 12.0 * math.sqrt(p.a * p.b * p.c * p.d)
        if K <= 0:
            cv, cl, cr, cn = Verdict.HOLDS, K, 0.0, "ad(n-6) - bc(n+6) <= 0"
        else:
            cv = Verdict.HOLDS if K <= root else Verdict.FAILS
            cl, cr, cn = K, root, "0 < ad(n-6) - bc(n+6) <= 12 sqrt(abcd)"
            if K == root:
                cn += " (equality)"
    else:
        cv, cl, cr, cn = Verdict.NOT_EVALUATED, K, math.nan, "corollary needs c, d <= 0"
    rep.entries.append(RegimeEntry("corollary", cl, cr, "<=", cv, hyp, cn))
    rep.entries.append(RegimeEntry("solution-dependent sharpening", math.nan, math.nan, "",
                                   Verdict.NOT_EVALUATED, hyp, "requires a candidate solution"))
    return rep


def sampled_q_max(p: Params, samples: int = 10**6, s_max: float = 1e6) -> tuple[float, float]:
    """Brute-force max of q on {0} and a log-spaced grid of (0, s_max].

    Returns (max q, max of |terms|) so callers can judge round-off.
    """
    A2, B, C0 = pohozaev_quadratic(p)
    s = np.concatenate(([0.0], np.geomspace(s_max * 1e-12, s_max, samples - 1)))
    q = (A2 * s + B) * s + C0
    scale = np.abs(A2) * s * s + np.abs(B) * s + abs(C0)
    k = int(np.argmax(q))
    return float(q[k]), float(scale[k])


# ---------------------------------------------------------------- linear stability


@dataclass
class StabilityReport:
    rates: np.ndarray
    slope: float
    modes_stable: bool
    criterion_stable: bool
    unstable_modes: list[int]

    @property
    def verdict(self) -> Verdict:
        return Verdict.HOLDS if self.modes_stable and self.criterion_stable else Verdict.FAILS

    def to_dict(self) -> dict:
        return {"rates": [float(r) for r in self.rates], "slope": self.slope,
                "modes_stable": self.modes_stable, "criterion_stable": self.criterion_stable,
                "unstable_modes": self.unstable_modes, "verdict": self.verdict.value}


def linear_stability(p: Params, spectrum: NeumannSpectrum) -> StabilityReport:
    """Growth rates r_k = (2bc/d - a) lambda_k - c of the constant state c/d.

    ``criterion_stable`` is the closed-form test c/d <= a/(2b) (slope <= 0),
    which covers every mode of an unbounded spectrum; ``modes_stable``
    checks the supplied modes only.
    """
    if not (p.c > 0 and p.d > 0):
        raise ValueError("linear stability of c/d needs c > 0 and d > 0")
    slope = 2.0 * p.b * p.c / p.d - p.a
    rates = slope * np.asarray(spectrum.lambdas, dtype=float) - p.c
    unstable = [int(i) + 1 for i in np.nonzero(rates >= 0)[0]]
    return StabilityReport(rates, slope, not unstable, slope <= 0, unstable)
