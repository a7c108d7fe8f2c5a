# herald/source.py
"""
Forward/backward pair-emission state of the double-pass PDC source.

Each crystal emits into two mode pairs: the even index on the pump's first
pass (weight 1) and the odd index after the pump mirror (weight e^{i pair_phase}).
The emission exponential is truncated order by order: order K contributes
``tau**K / K! * (sum_j w_j a_j^dagger b_j^dagger)**K |vac>``.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field

from .conf import get_setting
from .exceptions import (
    EXPANSION_BUDGET_ERROR_MSG,
    ExpansionBudgetError,
    ZeroStateError,
)
from .fock import (
    POLARIZATIONS,
    FockState,
    ModeId,
    ModeRegistry,
    SpatialMode,
    StateVector,
    add,
    apply_creation_monomial,
    normalize,
    phase,
    scale,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairTerm:
    """
    One summand ``w * a_m,P^dagger b_m,P^dagger`` of the pair-creation operator.
    """

    index: int
    polarization: str
    weight: complex = 1 + 0j

    @property
    def mode_a(self):
        return SpatialMode("a", self.index)

    @property
    def mode_b(self):
        return SpatialMode("b", self.index)

    @property
    def backward(self):
        return self.index % 2 == 1

    def monomial(self, power=1):
        return (
            (self.mode_a.sub(self.polarization), power),
            (self.mode_b.sub(self.polarization), power),
        )


@dataclass(frozen=True)
class SourceConfig:
    """
    Source parameters. ``delta_phi`` is the mirror phase referred to the
    down-converted wavelength; a backward pair picks up twice that, since the
    pump runs at twice the down-converted frequency.
    """

    n_crystals: int
    delta_phi: float = 0.0
    tau: float = 0.05
    orders: tuple = field(default=())

    def __post_init__(self):
        if self.n_crystals < 1:
            raise ValueError(f"n_crystals must be >= 1, got {self.n_crystals}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        orders = tuple(sorted(set(int(k) for k in self.orders)))
        if not orders:
            raise ValueError("orders must not be empty")
        if orders[0] < 0:
            raise ValueError(f"orders must be >= 0, got {orders[0]}")
        object.__setattr__(self, "orders", orders)

    @classmethod
    def weak(cls, n_crystals, delta_phi=0.0, tau=0.05):
        """Only the wanted 2n-pair manifold."""
        return cls(n_crystals, delta_phi, tau, (2 * n_crystals,))

    @classmethod
    def strong(cls, n_crystals, delta_phi=0.0, tau=0.05, extra_orders=1):
        base = 2 * n_crystals
        return cls(n_crystals, delta_phi, tau, tuple(range(base, base + extra_orders + 1)))

    @property
    def pair_phase(self):
        return 2.0 * self.delta_phi

    @property
    def registry(self):
        return ModeRegistry.for_crystals(self.n_crystals)

    def pair_terms(self):
        return build_pair_terms(self.n_crystals, self.pair_phase)


def build_pair_terms(n_crystals, pair_phase):
    """
    The 4n pair terms: for each index m in 1..2n an H and a V term. Even m are
    forward emissions (weight 1), odd m backward ones (weight e^{i pair_phase}).
    """
    if n_crystals < 1:
        raise ValueError(f"n_crystals must be >= 1, got {n_crystals}")
    backward_weight = phase(pair_phase)
    terms = []
    for m in range(1, 2 * n_crystals + 1):
        weight = 1 + 0j if m % 2 == 0 else backward_weight
        for polarization in POLARIZATIONS:
            terms.append(PairTerm(m, polarization, weight))
    return terms


def _registry_for(terms):
    return ModeRegistry(max((t.index for t in terms), default=1))


def _check_budget(order, n_terms):
    budget = get_setting("EXPANSION_BUDGET")
    count = math.comb(n_terms + order - 1, order) if n_terms else int(order == 0)
    if order > get_setting("MAX_ORDER") or count > budget:
        raise ExpansionBudgetError(
            EXPANSION_BUDGET_ERROR_MSG.format(order=order, count=count, budget=budget)
        )
    return count


def emit_order(terms, order, registry=None):
    """
    ``(sum_j w_j a_j^dagger b_j^dagger)**order |vac> / order!``, expanded over
    multisets of term choices. Not normalized.
    """
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    registry = registry or _registry_for(terms)
    count = _check_budget(order, len(terms))
    logger.debug(f"Expanding emission order {order}: {count} monomials.")

    vacuum = StateVector.vacuum(registry)
    result = {}
    for choice in itertools.combinations_with_replacement(range(len(terms)), order):
        multiplicities = {}
        for j in choice:
            multiplicities[j] = multiplicities.get(j, 0) + 1
        # multinomial(order; c) / order! == 1 / prod(c!)
        coeff = 1 + 0j
        monomial = []
        for j, c in multiplicities.items():
            coeff *= terms[j].weight**c / math.factorial(c)
            monomial.extend(terms[j].monomial(c))
        created = apply_creation_monomial(vacuum, monomial, coeff)
        for fock, amplitude in created:
            result[fock] = result.get(fock, 0j) + amplitude
    return StateVector(result, registry, prune_threshold=0.0)


def apply_pair_operator(state, terms):
    """One application of ``sum_j w_j a_j^dagger b_j^dagger``."""
    total = StateVector.zero(state.registry)
    for term in terms:
        total = add(total, apply_creation_monomial(state, term.monomial(), term.weight))
    return total


def emit_family(terms, pair_counts, registry=None):
    """
    Emission restricted to given pair numbers per mode index, e.g.
    ``{2: 3, 4: 1}`` for three pairs into a2&b2 and one into a4&b4. Each index
    contributes ``(sum_P w a_m,P^dagger b_m,P^dagger)**c / c!``.
    """
    registry = registry or _registry_for(terms)
    state = StateVector.vacuum(registry)
    for index, count in sorted(pair_counts.items()):
        selected = [t for t in terms if t.index == index]
        for _ in range(count):
            state = apply_pair_operator(state, selected)
        state = scale(state, 1.0 / math.factorial(count))
    return state


def parity_families(n_crystals):
    """
    Pair-count vectors of the three 2n-pair families behind the parity-check
    state: one pair on every index, two on every forward index and two on
    every backward index.
    """
    size = 2 * n_crystals
    return (
        {m: 1 for m in range(1, size + 1)},
        {m: 2 for m in range(2, size + 1, 2)},
        {m: 2 for m in range(1, size + 1, 2)},
    )


def emit_truncated(config):
    """
    ``sum_{K in orders} tau**K * emit_order(terms, K)``, normalized.
    """
    terms = config.pair_terms()
    registry = config.registry
    # unpruned until normalized: small tau**K weights must survive the sum
    total = StateVector({}, registry, prune_threshold=0.0)
    for order in config.orders:
        emitted = emit_order(terms, order, registry)
        total = add(total, scale(emitted, config.tau**order))
    if total.is_zero():
        raise ZeroStateError(
            f"Emission is empty for orders {config.orders} at tau={config.tau}."
        )
    normalized, _ = normalize(total)
    state = StateVector(normalized.terms, registry)
    logger.info(
        f"Emission state for n={config.n_crystals}, orders={config.orders}: "
        f"{len(state)} terms."
    )
    return state


def backward_pair_count(fock):
    """Number of backward pairs in an emission term (photons on odd a-modes)."""
    return sum(count for mode, count in fock.entries if mode.side == "a" and mode.index % 2 == 1)


def flip_polarizations(state):
    """Global H<->V exchange of every sub-mode."""
    result = {}
    for fock, amplitude in state:
        flipped = FockState.from_occupations(
            (ModeId(m.side, m.index, m.primed, "V" if m.polarization == "H" else "H"), c)
            for m, c in fock.entries
        )
        result[flipped] = amplitude
    return state.derive(result)


def phase_from_mirror(delta_x, wavelength):
    """Mirror displacement to phase: 2*pi*delta_x/lambda."""
    if wavelength <= 0:
        raise ValueError(f"Wavelength must be positive, got {wavelength}")
    return 2.0 * math.pi * delta_x / wavelength
