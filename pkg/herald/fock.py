# herald/fock.py
"""
Sparse algebra over multimode bosonic Fock states.

A ``StateVector`` maps canonical ``FockState`` records to complex amplitudes.
Values are immutable; every operation returns a new state.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from types import MappingProxyType

from .conf import get_setting
from .exceptions import (
    MODE_SUPPORT_ERROR_MSG,
    OCCUPATION_OVERFLOW_ERROR_MSG,
    REGISTRY_MISMATCH_ERROR_MSG,
    ZERO_STATE_ERROR_MSG,
    ModeSupportError,
    OccupationOverflowError,
    RegistryMismatchError,
    ZeroStateError,
)

logger = logging.getLogger(__name__)

SIDES = ("a", "b")
POLARIZATIONS = ("H", "V")


@dataclass(frozen=True, order=True)
class SpatialMode:
    """
    A spatial mode label such as ``a1`` or ``b2'`` (primed = behind the PBS).
    """

    side: str
    index: int
    primed: bool = False

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"Invalid side: {self.side!r}")
        if self.index < 1:
            raise ValueError(f"Mode index must be >= 1, got {self.index}")

    def sub(self, polarization):
        return ModeId(self.side, self.index, self.primed, polarization)

    def __str__(self):
        return f"{self.side}{self.index}{chr(39) if self.primed else ''}"

    @classmethod
    def parse(cls, text):
        """Parses ``a3`` / ``b1'``."""
        text = text.strip()
        primed = text.endswith("'")
        body = text[:-1] if primed else text
        if len(body) < 2 or body[0] not in SIDES or not body[1:].isdigit():
            raise ValueError(f"Invalid spatial mode label: {text!r}")
        return cls(body[0], int(body[1:]), primed)


@dataclass(frozen=True, order=True)
class ModeId:
    """
    One polarization sub-mode. Field order gives the canonical mode order:
    side, index, unprimed before primed, H before V.
    """

    side: str
    index: int
    primed: bool
    polarization: str

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"Invalid side: {self.side!r}")
        if self.index < 1:
            raise ValueError(f"Mode index must be >= 1, got {self.index}")
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"Invalid polarization: {self.polarization!r}")

    @property
    def spatial(self):
        return SpatialMode(self.side, self.index, self.primed)

    def __str__(self):
        return f"{self.spatial}{self.polarization}"

    @classmethod
    def parse(cls, text):
        """Parses ``a1'H``."""
        text = text.strip()
        if not text or text[-1] not in POLARIZATIONS:
            raise ValueError(f"Invalid mode label: {text!r}")
        return SpatialMode.parse(text[:-1]).sub(text[-1])


@dataclass(frozen=True)
class ModeRegistry:
    """Declares the mode indices a circuit may use (1..max_index)."""

    max_index: int

    @classmethod
    def for_crystals(cls, n_crystals):
        return cls(2 * n_crystals)

    def check(self, mode):
        if not 1 <= mode.index <= self.max_index:
            raise ModeSupportError(
                MODE_SUPPORT_ERROR_MSG.format(
                    detail=f"{mode} outside registry 1..{self.max_index}"
                )
            )


@dataclass(frozen=True, order=True)
class FockState:
    """
    Canonical occupation record: ``(ModeId, occupation)`` pairs, modes strictly
    increasing, zero occupations omitted.
    """

    entries: tuple = ()

    @classmethod
    def from_occupations(cls, occupations):
        items = occupations.items() if hasattr(occupations, "items") else occupations
        merged = {}
        for mode, count in items:
            if count < 0:
                raise ValueError(f"Negative occupation for {mode}: {count}")
            merged[mode] = merged.get(mode, 0) + count
        return cls(tuple(sorted((m, c) for m, c in merged.items() if c > 0)))

    @classmethod
    def parse(cls, text):
        """Inverse of ``render``; the empty string is the vacuum."""
        pairs = []
        for token in text.split():
            label, _, count = token.rpartition(":")
            pairs.append((ModeId.parse(label), int(count)))
        return cls.from_occupations(pairs)

    def as_dict(self):
        return dict(self.entries)

    def occupation(self, mode):
        for entry_mode, count in self.entries:
            if entry_mode == mode:
                return count
        return 0

    @property
    def total(self):
        return sum(count for _, count in self.entries)

    def modes(self):
        return tuple(mode for mode, _ in self.entries)

    def spatial_modes(self):
        return {mode.spatial for mode, _ in self.entries}

    def count_in(self, spatial):
        return sum(c for m, c in self.entries if m.spatial == spatial)

    def split(self, spatial):
        """Returns ``(H count, V count, rest)`` for one spatial mode."""
        h_count = v_count = 0
        rest = []
        for mode, count in self.entries:
            if mode.spatial == spatial:
                if mode.polarization == "H":
                    h_count = count
                else:
                    v_count = count
            else:
                rest.append((mode, count))
        return h_count, v_count, FockState(tuple(rest))

    def with_counts(self, spatial, h_count, v_count):
        """Replaces the occupation of both sub-modes of ``spatial``."""
        occupations = [(m, c) for m, c in self.entries if m.spatial != spatial]
        occupations.append((spatial.sub("H"), h_count))
        occupations.append((spatial.sub("V"), v_count))
        return FockState.from_occupations(occupations)

    def render(self):
        return " ".join(f"{mode}:{count}" for mode, count in self.entries)

    def __str__(self):
        return self.render() or "vac"


VACUUM = FockState()


def _check_amplitude(value):
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise ValueError(f"Non-finite amplitude: {value}")
    return value


class StateVector:
    """
    Sparse superposition over ``FockState`` records.

    Amplitudes with modulus below ``prune_threshold`` are dropped on
    construction, so every stored amplitude is significant.
    """

    __slots__ = ("_terms", "registry", "prune_threshold")

    def __init__(self, terms, registry, prune_threshold=None):
        if prune_threshold is None:
            prune_threshold = get_setting("PRUNE_THRESHOLD")
        if prune_threshold < 0:
            raise ValueError("prune_threshold must be non-negative")
        kept = {}
        for fock, amplitude in terms.items():
            amplitude = _check_amplitude(complex(amplitude))
            if abs(amplitude) >= prune_threshold and amplitude != 0:
                kept[fock] = amplitude
        self._terms = MappingProxyType(dict(sorted(kept.items())))
        self.registry = registry
        self.prune_threshold = prune_threshold

    def __reduce__(self):
        return (StateVector, (dict(self._terms), self.registry, self.prune_threshold))

    @classmethod
    def vacuum(cls, registry, amplitude=1.0):
        return cls({VACUUM: amplitude}, registry)

    @classmethod
    def zero(cls, registry):
        return cls({}, registry)

    @property
    def terms(self):
        return self._terms

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    def amplitude(self, fock):
        return self._terms.get(fock, 0j)

    def is_zero(self):
        return not self._terms

    def norm_squared(self):
        return math.fsum(abs(a) ** 2 for a in self._terms.values())

    def spatial_support(self):
        support = set()
        for fock in self._terms:
            support |= fock.spatial_modes()
        return support

    def photon_numbers(self):
        return {fock.total for fock in self._terms}

    def derive(self, terms):
        """New state on the same registry and threshold."""
        return StateVector(terms, self.registry, self.prune_threshold)

    def render_lines(self, digits=15):
        """Canonical ``amplitude<TAB>term`` lines, one per Fock term."""
        lines = []
        for fock, amplitude in self._terms.items():
            lines.append(
                f"{amplitude.real:+.{digits}g}{amplitude.imag:+.{digits}g}j\t{fock}"
            )
        return lines

    def __repr__(self):
        return f"StateVector({len(self._terms)} terms, max_index={self.registry.max_index})"


def _same_registry(s1, s2):
    if s1.registry != s2.registry:
        raise RegistryMismatchError(REGISTRY_MISMATCH_ERROR_MSG)


def _rising_factor(occupation, power):
    """sqrt((m+1)(m+2)...(m+p))"""
    return math.sqrt(math.perm(occupation + power, power))


def apply_creation_monomial(state, monomial, coeff=1.0):
    """
    Applies ``coeff * prod(a_mode^dagger ** power)`` to ``state``.

    ``monomial`` is an iterable of ``(ModeId, power)``; repeated modes add up.
    """
    cap = get_setting("OCCUPATION_CAP")
    powers = {}
    for mode, power in monomial:
        if power < 1:
            raise ValueError(f"Creation power must be >= 1, got {power} for {mode}")
        state.registry.check(mode)
        powers[mode] = powers.get(mode, 0) + power

    result = {}
    for fock, amplitude in state:
        occupations = fock.as_dict()
        factor = complex(coeff)
        for mode, power in powers.items():
            current = occupations.get(mode, 0)
            if current + power > cap:
                raise OccupationOverflowError(
                    OCCUPATION_OVERFLOW_ERROR_MSG.format(
                        occupation=current + power, mode=mode, cap=cap
                    )
                )
            factor *= _rising_factor(current, power)
            occupations[mode] = current + power
        target = FockState.from_occupations(occupations)
        result[target] = result.get(target, 0j) + amplitude * factor
    return state.derive(result)


def add(s1, s2):
    _same_registry(s1, s2)
    result = dict(s1.terms)
    for fock, amplitude in s2:
        result[fock] = result.get(fock, 0j) + amplitude
    return s1.derive(result)


def scale(s, c):
    c = complex(c)
    return s.derive({fock: amplitude * c for fock, amplitude in s})


def inner_product(s1, s2):
    """<s1|s2>, conjugate-linear in ``s1``."""
    _same_registry(s1, s2)
    small, large = (s1, s2) if len(s1) <= len(s2) else (s2, s1)
    total = 0j
    for fock, amplitude in small:
        other = large.amplitude(fock)
        if other:
            if small is s1:
                total += amplitude.conjugate() * other
            else:
                total += other.conjugate() * amplitude
    return total


def normalize(s):
    """Returns ``(unit-norm state, original norm)``."""
    norm = math.sqrt(s.norm_squared())
    if norm == 0:
        raise ZeroStateError(ZERO_STATE_ERROR_MSG)
    return scale(s, 1.0 / norm), norm


def transform_modes(state, rule):
    """
    Rewrites every sub-mode through ``rule(mode) -> (new_mode, phase)``.

    The phase multiplies the amplitude once per photon. The rule must be
    injective on the support; a collision means photons would merge.
    """
    mapping = {}
    result = {}
    for fock, amplitude in state:
        occupations = []
        factor = 1 + 0j
        for mode, count in fock.entries:
            if mode not in mapping:
                mapping[mode] = rule(mode)
            new_mode, phase = mapping[mode]
            occupations.append((new_mode, count))
            if phase != 1:
                factor *= phase**count
        targets = [m for m, _ in occupations]
        if len(set(targets)) != len(targets):
            raise ModeSupportError(
                MODE_SUPPORT_ERROR_MSG.format(detail=f"mode rule merges photons in {fock}")
            )
        target = FockState.from_occupations(occupations)
        result[target] = result.get(target, 0j) + amplitude * factor
    return state.derive(result)


def phase(theta):
    """Unit-modulus amplitude e^{i theta}."""
    return cmath.exp(1j * theta)
