# herald/optics.py
"""
Linear-optical elements and detection.

Mixed states are ensembles of pure branches labeled by what the environment
recorded (lost photons, the discarded polarization, the detected count).
Branch states are unit-norm; branch weights carry the probabilities.
"""

import logging
import math
from dataclasses import dataclass, field

from .exceptions import (
    MODE_SUPPORT_ERROR_MSG,
    InvalidPatternError,
    ModeSupportError,
    ZeroStateError,
)
from .fock import FockState, SpatialMode, StateVector, normalize, transform_modes

logger = logging.getLogger(__name__)

UNIT_PHASE_TOLERANCE = 1e-12
OUTCOMES = ("H", "V", "+", "-")
DETECTOR_KINDS = ("bucket", "pnr")

# Active rotation angle that carries each outcome onto H.
ALIGNMENT_ANGLES = {
    "H": 0.0,
    "V": -math.pi / 2,
    "+": -math.pi / 4,
    "-": math.pi / 4,
}


def _as_spatial(mode):
    return mode if isinstance(mode, SpatialMode) else SpatialMode.parse(mode)


@dataclass(frozen=True)
class PbsElement:
    """
    Polarizing beam splitter: H transmits (in_x -> out_xp, in_y -> out_yp),
    V reflects (in_x -> out_yp, in_y -> out_xp) picking up ``reflection_phase``.
    """

    in_x: SpatialMode
    in_y: SpatialMode
    out_xp: SpatialMode
    out_yp: SpatialMode
    reflection_phase: complex = 1 + 0j

    def __post_init__(self):
        labels = {self.in_x, self.in_y, self.out_xp, self.out_yp}
        if len(labels) != 4:
            raise ValueError(f"PBS ports must be four distinct modes, got {self}")
        if abs(abs(self.reflection_phase) - 1.0) > UNIT_PHASE_TOLERANCE:
            raise ValueError(
                f"reflection_phase must have unit modulus, got {self.reflection_phase}"
            )

    @property
    def inputs(self):
        return (self.in_x, self.in_y)

    def route(self, mode):
        spatial = mode.spatial
        if spatial == self.in_x:
            if mode.polarization == "H":
                return self.out_xp.sub("H"), 1
            return self.out_yp.sub("V"), self.reflection_phase
        if spatial == self.in_y:
            if mode.polarization == "H":
                return self.out_yp.sub("H"), 1
            return self.out_xp.sub("V"), self.reflection_phase
        return mode, 1


@dataclass(frozen=True)
class ProjectionSpec:
    """Polarizer setting in front of one detector."""

    mode: SpatialMode
    outcome: str = "+"

    def __post_init__(self):
        object.__setattr__(self, "mode", _as_spatial(self.mode))
        if self.outcome not in OUTCOMES:
            raise ValueError(f"Outcome must be one of {OUTCOMES}, got {self.outcome!r}")

    @property
    def basis(self):
        return "H/V" if self.outcome in ("H", "V") else "+/-"

    @property
    def alignment_angle(self):
        return ALIGNMENT_ANGLES[self.outcome]


@dataclass(frozen=True)
class DetectorModel:
    kind: str = "bucket"
    eta: float = 1.0
    required_count: int = 1

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ValueError(f"Detector kind must be one of {DETECTOR_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"Detector efficiency must lie in [0, 1], got {self.eta}")
        if self.required_count < 1:
            raise ValueError(f"required_count must be positive, got {self.required_count}")

    @classmethod
    def bucket(cls, eta=1.0):
        return cls("bucket", eta)

    @classmethod
    def pnr(cls, eta=1.0, required_count=1):
        return cls("pnr", eta, required_count)

    def accepts(self, count):
        if self.kind == "bucket":
            return count >= 1
        return count == self.required_count

    @property
    def label(self):
        if self.kind == "bucket":
            return f"bucket(eta={self.eta:g})"
        return f"pnr({self.required_count}, eta={self.eta:g})"


@dataclass(frozen=True)
class Branch:
    weight: float
    state: StateVector
    label: tuple = ()


@dataclass(frozen=True)
class Ensemble:
    """
    Probability-weighted pure branches. Weights may sum to less than one
    (a conditioned, unnormalized outcome); ``normalize_ensemble`` rescales.
    """

    branches: tuple = field(default=())

    def __post_init__(self):
        ordered = tuple(sorted(self.branches, key=lambda b: b.label))
        for branch in ordered:
            if branch.weight < 0:
                raise ValueError(f"Negative branch weight {branch.weight}")
        object.__setattr__(self, "branches", ordered)

    @classmethod
    def from_state(cls, state, weight=1.0):
        unit, _ = normalize(state)
        return cls((Branch(weight, unit),))

    def __len__(self):
        return len(self.branches)

    def __iter__(self):
        return iter(self.branches)

    def is_empty(self):
        return not self.branches

    def total_weight(self):
        return math.fsum(b.weight for b in self.branches)

    def spatial_support(self):
        support = set()
        for branch in self.branches:
            support |= branch.state.spatial_support()
        return support


def normalize_ensemble(ensemble):
    total = ensemble.total_weight()
    if total <= 0:
        raise ZeroStateError("Cannot normalize an empty ensemble.")
    return Ensemble(tuple(Branch(b.weight / total, b.state, b.label) for b in ensemble))


def apply_pbs(state, pbs):
    """Rewires the two input modes onto the primed outputs; unitary."""
    result = transform_modes(state, pbs.route)
    for fock, _ in result:
        for mode, _count in fock.entries:
            if mode.spatial in pbs.inputs:
                raise ModeSupportError(
                    MODE_SUPPORT_ERROR_MSG.format(detail=f"photons left on {mode} after PBS")
                )
    return result


def _rotate_counts(h_count, v_count, cos_t, sin_t):
    """
    Expansion of ``(c a_H + s a_V)^p (-s a_H + c a_V)^q |0> / sqrt(p! q!)``
    as ``{(h, v): coefficient}`` in normalized Fock amplitudes.
    """
    norm = math.sqrt(math.factorial(h_count) * math.factorial(v_count))
    out = {}
    for i in range(h_count + 1):
        from_h = math.comb(h_count, i) * cos_t**i * sin_t ** (h_count - i)
        if from_h == 0:
            continue
        for j in range(v_count + 1):
            from_v = math.comb(v_count, j) * (-sin_t) ** j * cos_t ** (v_count - j)
            if from_v == 0:
                continue
            h_new = i + j
            v_new = h_count + v_count - h_new
            bosonic = math.sqrt(math.factorial(h_new) * math.factorial(v_new))
            key = (h_new, v_new)
            out[key] = out.get(key, 0.0) + from_h * from_v * bosonic / norm
    return out


def rotate_polarization(state, mode, angle):
    """
    Polarization rotation of one spatial mode:
    a_H^dagger -> cos a_H^dagger + sin a_V^dagger,
    a_V^dagger -> -sin a_H^dagger + cos a_V^dagger.
    """
    mode = _as_spatial(mode)
    if angle == 0:
        return state
    cos_t, sin_t = math.cos(angle), math.sin(angle)
    cache = {}
    result = {}
    for fock, amplitude in state:
        h_count, v_count, _rest = fock.split(mode)
        if h_count == 0 and v_count == 0:
            result[fock] = result.get(fock, 0j) + amplitude
            continue
        key = (h_count, v_count)
        if key not in cache:
            cache[key] = _rotate_counts(h_count, v_count, cos_t, sin_t)
        for (h_new, v_new), coefficient in cache[key].items():
            target = fock.with_counts(mode, h_new, v_new)
            result[target] = result.get(target, 0j) + amplitude * coefficient
    return state.derive(result)


def _loss_factor(count, lost, eta):
    return math.sqrt(math.comb(count, lost)) * eta ** ((count - lost) / 2) * (1 - eta) ** (lost / 2)


def _lose(state, mode, eta, polarizations):
    """Groups surviving terms by the number of photons lost per sub-mode."""
    sub_modes = [mode.sub(p) for p in polarizations]
    grouped = {}
    for fock, amplitude in state:
        options = [((), amplitude, dict(fock.entries))]
        for sub_mode in sub_modes:
            count = fock.occupation(sub_mode)
            expanded = []
            for lost_so_far, amp, occupations in options:
                for lost in range(count + 1):
                    factor = _loss_factor(count, lost, eta)
                    if factor == 0:
                        continue
                    reduced = dict(occupations)
                    reduced[sub_mode] = count - lost
                    expanded.append((lost_so_far + (lost,), amp * factor, reduced))
            options = expanded
        for lost, amp, occupations in options:
            target = FockState.from_occupations(occupations)
            terms = grouped.setdefault(lost, {})
            terms[target] = terms.get(target, 0j) + amp
    return grouped


def _split_branch(branch, terms, label):
    sub_state = StateVector(terms, branch.state.registry, prune_threshold=0.0)
    weight_fraction = sub_state.norm_squared()
    if weight_fraction == 0:
        return None
    unit, _ = normalize(sub_state)
    unit = StateVector(unit.terms, branch.state.registry, branch.state.prune_threshold)
    if unit.is_zero():
        return None
    return Branch(branch.weight * weight_fraction, unit, branch.label + (label,))


def apply_loss(ensemble, mode, eta, polarizations=("H", "V")):
    """
    Beamsplitter-to-environment loss on one spatial mode. Each branch splits
    by the photons lost per listed sub-mode; coherence within a split is kept.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"Efficiency must lie in [0, 1], got {eta}")
    mode = _as_spatial(mode)
    if eta == 1.0:
        return ensemble
    branches = []
    for branch in ensemble:
        for lost, terms in sorted(_lose(branch.state, mode, eta, polarizations).items()):
            split = _split_branch(branch, terms, ("loss", str(mode), lost))
            if split is not None:
                branches.append(split)
    return Ensemble(tuple(branches))


def _resolve(branch, proj, eta):
    """
    Aligns the outcome with H, applies loss on the aligned sub-mode and groups
    the terms by ``(detected count, discarded orthogonal count, lost count)``.
    The measured mode is removed from every grouped term.
    """
    rotated = rotate_polarization(branch.state, proj.mode, proj.alignment_angle)
    if eta == 1.0:
        lossy = {(0,): dict(rotated.terms)}
    else:
        lossy = _lose(rotated, proj.mode, eta, ("H",))
    grouped = {}
    for (lost,), terms in lossy.items():
        for fock, amplitude in terms.items():
            detected, discarded, rest = fock.split(proj.mode)
            bucket = grouped.setdefault((detected, discarded, lost), {})
            bucket[rest] = bucket.get(rest, 0j) + amplitude
    return grouped


def outcome_distribution(ensemble, proj, eta=1.0):
    """Probability of each detected photon count (0 included) behind the polarizer."""
    distribution = {}
    for branch in ensemble:
        for (detected, _discarded, _lost), terms in _resolve(branch, proj, eta).items():
            weight = branch.weight * math.fsum(abs(a) ** 2 for a in terms.values())
            distribution[detected] = distribution.get(detected, 0.0) + weight
    return dict(sorted(distribution.items()))


def measure_mode(ensemble, proj, detector):
    """
    Projects one mode through a polarizer onto ``proj.outcome`` and conditions
    on the detector firing. Returns ``(click probability, conditional ensemble)``;
    the ensemble is sub-normalized and no longer contains the measured mode.
    """
    branches = []
    for branch in ensemble:
        for (detected, discarded, lost), terms in sorted(
            _resolve(branch, proj, detector.eta).items()
        ):
            if not detector.accepts(detected):
                continue
            label = ("detect", str(proj.mode), detected, discarded, lost)
            split = _split_branch(branch, terms, label)
            if split is not None:
                branches.append(split)
    conditional = Ensemble(tuple(branches))
    return conditional.total_weight(), conditional


def detect_pattern(ensemble, pattern):
    """
    Sequential ``measure_mode`` over ``[(ProjectionSpec, DetectorModel), ...]``.
    Returns the surviving weight and the ensemble on the unmeasured modes.
    """
    modes = [proj.mode for proj, _ in pattern]
    if len(set(modes)) != len(modes):
        raise InvalidPatternError(f"Duplicate measured mode in pattern: {[str(m) for m in modes]}")
    current = _drop_dark_terms(ensemble, modes)
    for proj, detector in pattern:
        if current.is_empty():
            break
        _, current = measure_mode(current, proj, detector)
    logger.debug(f"Pattern on {len(pattern)} modes kept {len(current)} branches.")
    return current.total_weight(), current


def _drop_dark_terms(ensemble, modes):
    """
    Removes terms with an empty measured mode: no detector model fires on
    them, whatever the loss. Branch weights shrink accordingly.
    """
    if not modes:
        return ensemble
    branches = []
    for branch in ensemble:
        terms = {
            fock: amplitude
            for fock, amplitude in branch.state
            if all(fock.count_in(mode) > 0 for mode in modes)
        }
        if len(terms) == len(branch.state):
            branches.append(branch)
            continue
        restricted = _split_branch(branch, terms, None)
        if restricted is not None:
            branches.append(Branch(restricted.weight, restricted.state, branch.label))
    return Ensemble(tuple(branches))


def conditional_amplitudes(state, pattern):
    """
    Unnormalized conditional amplitudes for lossless detectors.

    Returns ``{outcome label: {remaining FockState: amplitude}}``. The map is
    linear in ``state``, which lets callers superpose phase-resolved parts.
    """
    for _, detector in pattern:
        if detector.eta != 1.0:
            raise ValueError("conditional_amplitudes needs lossless detectors (eta = 1)")
    modes = [proj.mode for proj, _ in pattern]
    groups = {
        (): {
            fock: amplitude
            for fock, amplitude in state
            if all(fock.count_in(mode) > 0 for mode in modes)
        }
    }
    for proj, detector in pattern:
        regrouped = {}
        for label, terms in groups.items():
            sub_state = StateVector(terms, state.registry, prune_threshold=0.0)
            rotated = rotate_polarization(sub_state, proj.mode, proj.alignment_angle)
            for fock, amplitude in rotated:
                detected, discarded, rest = fock.split(proj.mode)
                if not detector.accepts(detected):
                    continue
                key = label + ((str(proj.mode), detected, discarded),)
                bucket = regrouped.setdefault(key, {})
                bucket[rest] = bucket.get(rest, 0j) + amplitude
        groups = regrouped
    return groups
