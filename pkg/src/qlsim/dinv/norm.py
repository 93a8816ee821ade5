"""Solution-norm estimation by running the deterministic pipeline at increasing l."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from ..errors import ParameterError
from ..vtaa import AmplificationSchedule, run_nested
from .instance import LinearSystemInstance
from .inverter import DinvSpec, build_inverter_vta, premerge_count

MODES = ("exact", "stochastic")


def upper_gate(c):
    """Amplitude above which the search stops: 4 sqrt(5) / (45 c)."""
    return 4 * math.sqrt(5) / (45 * c)


def lower_gate(c):
    """Amplitude below which l is certainly at least two short of l*: sqrt(5) / (15 c)."""
    return math.sqrt(5) / (15 * c)


def estimate_from_level(l, c):
    """Estimate 2 / (sqrt(5) 3^(l+1) c) returned when the search stops at l >= 1."""
    return 2.0 / (math.sqrt(5) * 3.0 ** (l + 1) * c)


def failure_schedule(l, l_max):
    """delta_l = 1 / (l_max - l + 3)^2; the sum over l = 1..l_max is below pi^2/6 - 5/4."""
    return 1.0 / (l_max - l + 3) ** 2


@dataclass
class AmplitudeOracle:
    """Per-l success amplitudes and oracle counts of the deterministic pipeline (cached)."""

    instance: LinearSystemInstance
    spec: DinvSpec = field(default_factory=DinvSpec)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.be = self.instance.block_encoding()

    @property
    def m(self):
        return self.be.m

    def level(self, l):
        """(final amplitude, O_b count, O_A count) for pre-merge count l."""
        if l not in self._cache:
            m = self.m
            spec = replace(self.spec, m=m, l=min(l, m))
            vta = build_inverter_vta(self.be, self.instance.b, spec)
            rounds = tuple(1 if j >= m - spec.l + 1 else 0 for j in range(1, m + 1))
            res = run_nested(vta, AmplificationSchedule(rounds))
            self._cache[l] = (res.trace.final_amplitude, res.ledger.oracle_b, res.ledger.oracle_a)
        return self._cache[l]

    def target(self):
        """Exact success amplitude of the inverter algorithm (plain composition)."""
        if "target" not in self._cache:
            spec = replace(self.spec, m=self.m)
            vta = build_inverter_vta(self.be, self.instance.b, spec)
            self._cache["target"] = vta.profile().q[-1]
        return self._cache["target"]


@dataclass
class NormEstimate:
    sqrt_p: float
    solution_norm: float
    stop_level: int
    max_level: int
    levels: list
    oracle_b: int
    oracle_a: int
    failures: int
    target: float
    c: float

    @property
    def ratio(self):
        return self.target / self.sqrt_p

    @property
    def within_factor_three(self):
        return 1 / 3 - 1e-12 <= self.ratio <= 3 + 1e-12

    def gap_separated(self):
        """True amplitudes below the lower gate for l <= l* - 2 and above the upper gate at l*."""
        l_star = premerge_count(self.target, self.c)
        ok = True
        for l, amp, *_ in self.levels:
            if l <= l_star - 2:
                ok = ok and amp < lower_gate(self.c)
            if l == l_star:
                ok = ok and amp > upper_gate(self.c)
        return ok

    def to_json(self):
        return {
            "sqrt_p": self.sqrt_p,
            "solution_norm": self.solution_norm,
            "stop_level": self.stop_level,
            "max_level": self.max_level,
            "levels": [list(x) for x in self.levels],
            "oracle_b": self.oracle_b,
            "oracle_a": self.oracle_a,
            "failures": self.failures,
            "target": self.target,
            "ratio": self.ratio,
            "within_factor_three": self.within_factor_three,
        }


def estimate_solution_norm(instance: LinearSystemInstance, alpha_p, mode="exact", spec=None,
                           rng=None, accuracy=0.01, oracle: AmplitudeOracle | None = None):
    """3-multiplicative estimate of the success amplitude sqrt(p) of the inverter algorithm.

    alpha_p is a known lower bound on p.  In stochastic mode each amplitude
    estimate is the true value plus uniform noise of size `accuracy`, replaced
    by an adversarial value with probability delta_l.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    if not 0 < alpha_p <= 1:
        raise ParameterError("alpha_p must lie in (0, 1]")
    if mode == "stochastic" and rng is None:
        raise ParameterError("stochastic mode needs a seeded random generator")
    oracle = oracle or AmplitudeOracle(instance, spec or DinvSpec())
    c = oracle.spec.c
    l_max = max(1, min(premerge_count(math.sqrt(alpha_p), c), oracle.m))
    gate = upper_gate(c)
    levels = []
    total_b = total_a = failures = 0
    stop = l_max
    # level 0 is the plain run, so a stop there reads sqrt(p) directly
    for l in range(0, l_max + 1):
        amp, ob, oa = oracle.level(l)
        repeats = 1
        reading = amp
        if mode == "stochastic":
            delta = failure_schedule(l, l_max)
            repeats = math.ceil(math.log(1 / delta))
            reading = amp + rng.uniform(-accuracy, accuracy)
            if rng.random() < delta:
                failures += 1
                reading = 0.0 if amp > gate else 1.0
        total_b += ob * repeats
        total_a += oa * repeats
        levels.append((l, amp, reading, ob * repeats))
        if reading > gate:
            stop = l
            break
    sqrt_p = levels[0][2] if stop == 0 else estimate_from_level(stop, c)
    return NormEstimate(
        sqrt_p=sqrt_p,
        solution_norm=sqrt_p * oracle.be.alpha_Ainv,
        stop_level=stop,
        max_level=l_max,
        levels=levels,
        oracle_b=total_b,
        oracle_a=total_a,
        failures=failures,
        target=oracle.target(),
        c=c,
    )


def union_failure_bound():
    return math.pi**2 / 6 - 1.25
