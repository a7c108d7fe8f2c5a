# herald/oracle.py
"""
Exact re-derivation of small circuits.

Coefficients live in the ring of rational combinations of square roots of
square-free integers (``Surd``). Amplitudes are trigonometric polynomials in
the mirror phase: ``ExactAmplitude`` maps an integer exponent k to the Surd
coefficient of e^{i k dphi}. All coefficients in the circuit are real, so
conjugation only negates the exponents.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

from scipy.stats import qmc

from .conf import get_setting
from .exceptions import EXPANSION_BUDGET_ERROR_MSG, ExactRingError, ExpansionBudgetError
from .fock import POLARIZATIONS, FockState, ModeId, SpatialMode, StateVector
from .scheme import build_circuit, parse_signs
from .source import parity_families

logger = logging.getLogger(__name__)


def _square_free(value):
    """``value = outer**2 * inner`` with ``inner`` square-free."""
    if value <= 0:
        raise ExactRingError(f"Square root of a non-positive integer: {value}")
    outer, inner, factor = 1, value, 2
    while factor * factor <= inner:
        while inner % (factor * factor) == 0:
            inner //= factor * factor
            outer *= factor
        factor += 1
    return outer, inner


def _rational(value):
    if isinstance(value, bool) or not isinstance(value, (int, Fraction)):
        raise ExactRingError(f"Inexact value {value!r} in exact arithmetic")
    return Fraction(value)


class Surd:
    """
    ``sum_m q_m * sqrt(m)`` over square-free m with rational q_m.
    Canonical: zero coefficients dropped, radicands ascending.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms=None):
        kept = {}
        for radicand, coefficient in (terms or {}).items():
            coefficient = _rational(coefficient)
            if coefficient:
                kept[radicand] = kept.get(radicand, Fraction(0)) + coefficient
        self._terms = tuple(sorted((m, q) for m, q in kept.items() if q))

    @classmethod
    def of(cls, value):
        if isinstance(value, Surd):
            return value
        return cls({1: _rational(value)})

    @classmethod
    def sqrt(cls, value):
        """Exact square root of a non-negative rational."""
        value = _rational(value)
        if value == 0:
            return cls()
        if value < 0:
            raise ExactRingError(f"Square root of a negative value: {value}")
        # sqrt(p/q) = sqrt(p*q)/q
        outer, inner = _square_free(value.numerator * value.denominator)
        return cls({inner: Fraction(outer, value.denominator)})

    @property
    def terms(self):
        return self._terms

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        if not isinstance(other, Surd):
            try:
                other = Surd.of(other)
            except ExactRingError:
                return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(self._terms)

    def __neg__(self):
        return Surd({m: -q for m, q in self._terms})

    def __add__(self, other):
        other = Surd.of(other)
        merged = dict(self._terms)
        for m, q in other._terms:
            merged[m] = merged.get(m, Fraction(0)) + q
        return Surd(merged)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-Surd.of(other))

    def __mul__(self, other):
        other = Surd.of(other)
        product = {}
        for m1, q1 in self._terms:
            for m2, q2 in other._terms:
                g = math.gcd(m1, m2)
                radicand = (m1 // g) * (m2 // g)
                product[radicand] = product.get(radicand, Fraction(0)) + q1 * q2 * g
        return Surd(product)

    __rmul__ = __mul__

    def __truediv__(self, other):
        divisor = Surd.of(other)
        if not divisor.is_rational() or not divisor:
            raise ExactRingError(f"Division by {divisor.render()} leaves the supported ring")
        scale = 1 / divisor.rational_value()
        return Surd({m: q * scale for m, q in self._terms})

    def is_rational(self):
        return all(m == 1 for m, _ in self._terms)

    def rational_value(self):
        if not self.is_rational():
            raise ExactRingError(f"{self.render()} is irrational")
        return self._terms[0][1] if self._terms else Fraction(0)

    def __float__(self):
        return math.fsum(float(q) * math.sqrt(m) for m, q in self._terms)

    def render(self):
        """``p/q * 2^(-h/2) [* sqrt(m)]`` per radicand, joined with `` + ``."""
        if not self._terms:
            return "0"
        parts = []
        for radicand, coefficient in self._terms:
            # sqrt(2m) = 2 * 2^(-1/2) * sqrt(m): even radicands move into h = 1
            half_power = radicand % 2 == 0
            odd = radicand // 2 if half_power else radicand
            rational = coefficient * 2 if half_power else coefficient
            text = f"{rational.numerator}/{rational.denominator} * 2^(-{1 if half_power else 0}/2)"
            if odd > 1:
                text += f" * sqrt({odd})"
            parts.append(text)
        return " + ".join(parts)

    def __repr__(self):
        return f"Surd({self.render()})"


ZERO = Surd()
ONE = Surd.of(1)
HALF_ROOT = Surd.sqrt(Fraction(1, 2))


class ExactAmplitude:
    """Trigonometric polynomial ``sum_k c_k e^{i k dphi}`` with Surd coefficients."""

    __slots__ = ("_terms",)

    def __init__(self, terms=None):
        kept = {}
        for exponent, coefficient in (terms or {}).items():
            coefficient = Surd.of(coefficient)
            if coefficient:
                kept[int(exponent)] = coefficient
        self._terms = tuple(sorted(kept.items()))

    @classmethod
    def constant(cls, value):
        return cls({0: value})

    @classmethod
    def phase(cls, exponent, coefficient=1):
        return cls({exponent: coefficient})

    @property
    def terms(self):
        return self._terms

    @property
    def exponents(self):
        return tuple(k for k, _ in self._terms)

    def coefficient(self, exponent):
        for k, c in self._terms:
            if k == exponent:
                return c
        return ZERO

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        if not isinstance(other, ExactAmplitude):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(self._terms)

    def __add__(self, other):
        merged = dict(self._terms)
        for k, c in other._terms:
            merged[k] = merged.get(k, ZERO) + c
        return ExactAmplitude(merged)

    def __neg__(self):
        return ExactAmplitude({k: -c for k, c in self._terms})

    def __mul__(self, other):
        if not isinstance(other, ExactAmplitude):
            factor = Surd.of(other)
            return ExactAmplitude({k: c * factor for k, c in self._terms})
        product = {}
        for k1, c1 in self._terms:
            for k2, c2 in other._terms:
                product[k1 + k2] = product.get(k1 + k2, ZERO) + c1 * c2
        return ExactAmplitude(product)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ExactAmplitude({k: c / other for k, c in self._terms})

    def conjugate(self):
        return ExactAmplitude({-k: c for k, c in self._terms})

    def modulus_squared(self):
        return self * self.conjugate()

    def evaluate(self, delta_phi):
        return sum((float(c) * cmath.exp(1j * k * delta_phi) for k, c in self._terms), 0j)

    def render(self):
        if not self._terms:
            return "0"
        return " + ".join(f"{c.render()} * e^(i {k} dphi)" for k, c in self._terms)

    def __repr__(self):
        return f"ExactAmplitude({self.render()})"


def _merge(target, fock, amplitude):
    if fock in target:
        amplitude = target[fock] + amplitude
    if amplitude:
        target[fock] = amplitude
    else:
        target.pop(fock, None)


class ExactState:
    """``FockState -> ExactAmplitude`` with zero amplitudes dropped."""

    __slots__ = ("_terms",)

    def __init__(self, terms=None):
        self._terms = dict(sorted((f, a) for f, a in (terms or {}).items() if a))

    @property
    def terms(self):
        return self._terms

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    def amplitude(self, fock):
        return self._terms.get(fock, ExactAmplitude())

    def exponents(self):
        found = set()
        for amplitude in self._terms.values():
            found.update(amplitude.exponents)
        return found

    def norm_squared(self):
        total = ExactAmplitude()
        for amplitude in self._terms.values():
            total = total + amplitude.modulus_squared()
        return total

    def evaluate(self, delta_phi, registry):
        return StateVector(
            {fock: amplitude.evaluate(delta_phi) for fock, amplitude in self._terms.items()},
            registry,
            prune_threshold=0.0,
        )


def _compositions(total, parts):
    """All tuples of ``parts`` non-negative integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _check_oracle_budget(n_crystals, order):
    count = math.comb(4 * n_crystals + order - 1, order)
    budget = get_setting("ORACLE_BUDGET")
    if count > budget:
        raise ExpansionBudgetError(EXPANSION_BUDGET_ERROR_MSG.format(order=order, count=count, budget=budget))
    return count


def exact_emit(n_crystals, order, tau=Fraction(1)):
    """
    Order-K emission ``tau**K/K! (sum_j w_j a_j^dagger b_j^dagger)**K |vac>``.

    Each pair-count vector c gives one Fock term; the 1/c! from the
    multinomial and the sqrt(c!)**2 from the boson factors cancel, so every
    amplitude is ``tau**K * e^{i 2 (backward pairs) dphi}``.
    """
    _check_oracle_budget(n_crystals, order)
    tau = _rational(tau)
    slots = [(m, p) for m in range(1, 2 * n_crystals + 1) for p in POLARIZATIONS]
    terms = {}
    for counts in _compositions(order, len(slots)):
        occupations = []
        backward = 0
        for (index, polarization), count in zip(slots, counts):
            if count:
                occupations.append((ModeId("a", index, False, polarization), count))
                occupations.append((ModeId("b", index, False, polarization), count))
                backward += count if index % 2 else 0
        terms[FockState.from_occupations(occupations)] = ExactAmplitude.phase(2 * backward, tau**order)
    return ExactState(terms)


def _pbs_routes(layout):
    """H transmits, V reflects; the oracle keeps the reflection phase at 1."""
    routes = {}
    for element in layout.elements:
        routes[element.in_x.sub("H")] = element.out_xp.sub("H")
        routes[element.in_x.sub("V")] = element.out_yp.sub("V")
        routes[element.in_y.sub("H")] = element.out_yp.sub("H")
        routes[element.in_y.sub("V")] = element.out_xp.sub("V")
    return routes


def _exact_propagate(state, layout):
    routes = _pbs_routes(layout)
    terms = {}
    for fock, amplitude in state:
        moved = FockState.from_occupations((routes.get(mode, mode), count) for mode, count in fock.entries)
        _merge(terms, moved, amplitude)
    return ExactState(terms)


# cos/sin of the alignment rotation carrying each outcome onto H
_ALIGNMENT = {
    "H": (ONE, ZERO),
    "V": (ZERO, -ONE),
    "+": (HALF_ROOT, -HALF_ROOT),
    "-": (HALF_ROOT, HALF_ROOT),
}


def _power(value, exponent):
    result = ONE
    for _ in range(exponent):
        result = result * value
    return result


def _projected_counts(h_count, v_count, outcome, detected):
    """
    Amplitudes ``{discarded: coefficient}`` of finding ``detected`` photons
    along ``outcome`` and ``discarded`` along the orthogonal polarization.
    """
    cos_t, sin_t = _ALIGNMENT[outcome]
    out = {}
    for i in range(h_count + 1):
        from_h = math.comb(h_count, i) * _power(cos_t, i) * _power(sin_t, h_count - i)
        if not from_h:
            continue
        j = detected - i
        if not 0 <= j <= v_count:
            continue
        from_v = math.comb(v_count, j) * _power(-sin_t, j) * _power(cos_t, v_count - j)
        if not from_v:
            continue
        discarded = h_count + v_count - detected
        bosonic = Surd.sqrt(
            Fraction(
                math.factorial(detected) * math.factorial(discarded),
                math.factorial(h_count) * math.factorial(v_count),
            )
        )
        out[discarded] = out.get(discarded, ZERO) + from_h * from_v * bosonic
    return {d: c for d, c in out.items() if c}


@dataclass(frozen=True)
class ExactPipelineResult:
    """
    Conditional amplitudes per outcome label (measured mode, discarded count)
    and the herald probability as an exact trig polynomial.
    """

    n_crystals: int
    orders: tuple
    signs: tuple
    modes: tuple
    tau: Fraction
    branches: dict
    norm_squared: Fraction
    probability: ExactAmplitude

    def herald_probability(self, delta_phi):
        return self.probability.evaluate(delta_phi).real

    def evaluate_branches(self, delta_phi, registry):
        return {label: state.evaluate(delta_phi, registry) for label, state in self.branches.items()}

    def fidelity(self, delta_phi, target):
        """Heralded-ensemble fidelity with ``target`` at one phase value."""
        total = 0.0
        overlap = 0.0
        for state in self.branches.values():
            values = {fock: amplitude.evaluate(delta_phi) for fock, amplitude in state}
            total += math.fsum(abs(v) ** 2 for v in values.values())
            projection = sum((t.conjugate() * values.get(fock, 0j) for fock, t in target), 0j)
            overlap += abs(projection) ** 2
        return overlap / total if total else 0.0


def exact_pipeline(n_crystals, orders, sign_pattern, tau=Fraction(1), modes=None):
    """
    Emission, both PBS rows and pnr(1) lossless detection on ``modes``
    (default: the heralding modes), in exact arithmetic.
    """
    layout = build_circuit(n_crystals)
    modes = tuple(SpatialMode.parse(m) if isinstance(m, str) else m for m in (modes or layout.detection_modes))
    signs = parse_signs(sign_pattern, len(modes))
    orders = tuple(sorted(set(orders)))

    emission = {}
    for order in orders:
        for fock, amplitude in exact_emit(n_crystals, order, tau):
            emission[fock] = amplitude
    emission = ExactState(emission)
    norm = emission.norm_squared()
    if norm.exponents != (0,):
        raise ExactRingError(f"Emission norm depends on the phase: {norm.render()}")
    norm_squared = norm.coefficient(0).rational_value()

    propagated = _exact_propagate(emission, layout)
    groups = {
        (): {
            fock: amplitude
            for fock, amplitude in propagated
            if all(fock.count_in(mode) > 0 for mode in modes)
        }
    }
    for mode, sign in zip(modes, signs):
        regrouped = {}
        for label, terms in groups.items():
            for fock, amplitude in terms.items():
                h_count, v_count, rest = fock.split(mode)
                for discarded, coefficient in _projected_counts(h_count, v_count, sign, 1).items():
                    bucket = regrouped.setdefault(label + ((str(mode), discarded),), {})
                    _merge(bucket, rest, amplitude * coefficient)
        groups = {label: terms for label, terms in regrouped.items() if terms}

    branches = {label: ExactState(terms) for label, terms in sorted(groups.items())}
    probability = ExactAmplitude()
    for state in branches.values():
        probability = probability + state.norm_squared()
    probability = probability / norm_squared
    logger.debug(f"Exact pipeline n={n_crystals}, orders={orders}: {len(branches)} outcome labels.")
    return ExactPipelineResult(
        n_crystals=n_crystals,
        orders=orders,
        signs=signs,
        modes=modes,
        tau=_rational(tau),
        branches=branches,
        norm_squared=norm_squared,
        probability=probability,
    )


def exact_coincidence(n_crystals, sign_pattern):
    """Full 4n-fold coincidence of the 2n-pair emission on every primed mode."""
    layout = build_circuit(n_crystals)
    return exact_pipeline(n_crystals, (2 * n_crystals,), sign_pattern, modes=layout.primed_modes)


def exact_parity_check(n_crystals):
    """
    The 2n-pair emission restricted to the three parity-check families, behind
    both PBS rows and kept on one photon in every a' mode.
    """
    layout = build_circuit(n_crystals)
    families = [
        {m: counts.get(m, 0) for m in range(1, 2 * n_crystals + 1)} for counts in parity_families(n_crystals)
    ]
    emitted = ExactState(
        {
            fock: amplitude
            for fock, amplitude in exact_emit(n_crystals, 2 * n_crystals)
            if _pairs_per_index(fock, n_crystals) in families
        }
    )
    heralds = [mode for mode in layout.primed_modes if mode.side == "a"]
    return ExactState(
        {
            fock: amplitude
            for fock, amplitude in _exact_propagate(emitted, layout)
            if all(fock.count_in(mode) == 1 for mode in heralds)
        }
    )


def _pairs_per_index(fock, n_crystals):
    counts = {m: 0 for m in range(1, 2 * n_crystals + 1)}
    for mode, count in fock.entries:
        if mode.side == "a":
            counts[mode.index] += count
    return counts


def golden_lines(state):
    """Canonical ``term<TAB>exact amplitude`` lines."""
    return [f"{fock}\t{amplitude.render()}" for fock, amplitude in state]


def halton_phases(count=16):
    """Deterministic quasi-random phase values in [0, 2 pi)."""
    sampler = qmc.Halton(d=1, scramble=False)
    return [2 * math.pi * float(x) for x in sampler.random(count)[:, 0]]
