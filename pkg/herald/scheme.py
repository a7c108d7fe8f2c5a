# herald/scheme.py
"""
Heralding circuits for n crystals and the analyses run on them.

The left PBS row combines the forward mode of one crystal with the backward
mode of the next (a2&a3, a4&a5, ..., a2n&a1); the right row combines the two
modes of one crystal (b1&b2, b3&b4, ...). Heralding detects every primed
a-mode plus the odd primed b-modes; the even primed b-modes carry the output.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .exceptions import (
    MODE_SUPPORT_ERROR_MSG,
    DegenerateFitError,
    InvalidCircuitError,
    InvalidPatternError,
    ModeSupportError,
)
from .fock import (
    FockState,
    ModeRegistry,
    SpatialMode,
    StateVector,
    add,
    inner_product,
    normalize,
    phase,
)
from .optics import (
    Branch,
    DetectorModel,
    Ensemble,
    PbsElement,
    ProjectionSpec,
    apply_pbs,
    conditional_amplitudes,
    detect_pattern,
    normalize_ensemble,
)
from .source import (
    SourceConfig,
    backward_pair_count,
    build_pair_terms,
    emit_family,
    emit_order,
    emit_truncated,
    parity_families,
)
from .tasks import map_grid

logger = logging.getLogger(__name__)

SIGNS = ("+", "-")
PROBABILITY_NOTE = "conditional on the included emission orders"
MIN_FIT_SAMPLES = 16


@dataclass(frozen=True)
class CircuitLayout:
    n_crystals: int
    pbs_left: tuple
    pbs_right: tuple
    detection_modes: tuple
    output_modes: tuple

    @property
    def registry(self):
        return ModeRegistry.for_crystals(self.n_crystals)

    @property
    def elements(self):
        return self.pbs_left + self.pbs_right

    @property
    def primed_modes(self):
        """Every primed mode in canonical order (a1'..a2n', b1'..b2n')."""
        return tuple(sorted(self.detection_modes + self.output_modes))


def build_circuit(n_crystals, reflection_phase=1 + 0j):
    if n_crystals < 2:
        raise InvalidCircuitError(f"The heralding circuit needs at least 2 crystals, got {n_crystals}")
    size = 2 * n_crystals

    def port(side, index, primed=False):
        return SpatialMode(side, (index - 1) % size + 1, primed)

    pbs_left = []
    pbs_right = []
    for j in range(1, n_crystals + 1):
        x, y = 2 * j, 2 * j + 1
        pbs_left.append(
            PbsElement(port("a", x), port("a", y), port("a", x, True), port("a", y, True), reflection_phase)
        )
        x, y = 2 * j - 1, 2 * j
        pbs_right.append(
            PbsElement(port("b", x), port("b", y), port("b", x, True), port("b", y, True), reflection_phase)
        )

    detection = [SpatialMode("a", m, True) for m in range(1, size + 1)]
    detection += [SpatialMode("b", m, True) for m in range(1, size + 1, 2)]
    outputs = [SpatialMode("b", m, True) for m in range(2, size + 1, 2)]
    return CircuitLayout(n_crystals, tuple(pbs_left), tuple(pbs_right), tuple(detection), tuple(outputs))


def parse_signs(pattern, expected):
    """``"+-++"`` (or a sequence of signs) -> tuple of signs, length-checked."""
    signs = tuple(pattern)
    if len(signs) != expected:
        raise InvalidPatternError(
            f"Pattern {''.join(map(str, signs))!r} has {len(signs)} signs, the circuit needs {expected}."
        )
    for sign in signs:
        if sign not in SIGNS:
            raise InvalidPatternError(f"Pattern signs must be '+' or '-', got {sign!r}.")
    return signs


def _target_sign(layout, signs):
    # Only minus outcomes on even primed a-modes flip the V...V branch.
    flips = sum(
        1
        for mode, sign in zip(layout.detection_modes, signs)
        if sign == "-" and mode.side == "a" and mode.index % 2 == 0
    )
    return -1 if flips % 2 else 1


def ghz_target(n_crystals, sign_pattern=None, delta_phi=0.0):
    """
    ``(|H...H> + sigma e^{i 2n dphi} |V...V>)/sqrt(2)`` on the output modes.
    """
    layout = build_circuit(n_crystals)
    signs = parse_signs(sign_pattern or "+" * len(layout.detection_modes), len(layout.detection_modes))
    sigma = _target_sign(layout, signs)
    all_h = FockState.from_occupations((mode.sub("H"), 1) for mode in layout.output_modes)
    all_v = FockState.from_occupations((mode.sub("V"), 1) for mode in layout.output_modes)
    amplitude = 1 / math.sqrt(2)
    terms = {
        all_h: amplitude,
        all_v: sigma * phase(2 * n_crystals * delta_phi) * amplitude,
    }
    return StateVector(terms, layout.registry)


def target_label(n_crystals, sign_pattern=None, delta_phi=0.0):
    layout = build_circuit(n_crystals)
    signs = parse_signs(sign_pattern or "+" * len(layout.detection_modes), len(layout.detection_modes))
    sign = "+" if _target_sign(layout, signs) > 0 else "-"
    return f"GHZ{n_crystals}({sign},phase={2 * n_crystals * delta_phi:.6g})"


def propagate(state, layout):
    """Both PBS rows."""
    for element in layout.elements:
        state = apply_pbs(state, element)
    return state


def fidelity(ensemble, target):
    """``sum_i w_i |<target|psi_i>|^2`` for a normalized ensemble."""
    support = ensemble.spatial_support()
    allowed = target.spatial_support()
    if not support <= allowed:
        extra = sorted(str(m) for m in support - allowed)
        raise ModeSupportError(MODE_SUPPORT_ERROR_MSG.format(detail=f"ensemble uses {extra} outside the target"))
    return math.fsum(b.weight * abs(inner_product(target, b.state)) ** 2 for b in ensemble)


def _v_counts(fock, modes):
    return [fock.occupation(mode.sub("V")) for mode in modes]


def fidelity_up_to_local_phases(ensemble, target):
    """
    Fidelity maximized over a phase on the V sub-mode of every target mode.

    Two-term targets have a closed form; otherwise the phases are optimized
    numerically from a small set of quasi-random starts.
    """
    base = fidelity(ensemble, target)
    modes = sorted(target.spatial_support())
    target_terms = list(target.terms.items())
    counts = np.array([_v_counts(fock, modes) for fock, _ in target_terms], dtype=float)
    overlaps = np.array(
        [[t.conjugate() * b.state.amplitude(fock) for fock, t in target_terms] for b in ensemble],
        dtype=complex,
    ).reshape(len(ensemble), len(target_terms))
    weights = np.array([b.weight for b in ensemble], dtype=float)

    if len(target_terms) == 2:
        if not np.any(counts[0] - counts[1]):
            return base
        a, b = overlaps[:, 0], overlaps[:, 1]
        best = np.sum(weights * (np.abs(a) ** 2 + np.abs(b) ** 2)) + 2 * abs(np.sum(weights * a.conj() * b))
        return float(max(base, best))

    def negative_fidelity(theta):
        phases = np.exp(1j * counts @ theta)
        return -float(np.sum(weights * np.abs(overlaps @ phases) ** 2))

    starts = [np.zeros(len(modes))]
    if modes:
        starts += list(2 * np.pi * qmc.Halton(d=len(modes), seed=0).random(15))
    best = base
    for start in starts:
        result = optimize.minimize(negative_fidelity, start, method="BFGS")
        best = max(best, -result.fun)
    return float(min(best, 1.0))


def _qubit_subspace(state, output_modes):
    return {
        fock: amplitude
        for fock, amplitude in state
        if all(fock.count_in(mode) == 1 for mode in output_modes)
    }


def qubit_projection(ensemble, output_modes):
    """The ensemble restricted to one photon per output mode, renormalized."""
    branches = []
    for branch in ensemble:
        kept = _qubit_subspace(branch.state, output_modes)
        if kept:
            restricted, norm = normalize(branch.state.derive(kept))
            branches.append(Branch(branch.weight * norm**2, restricted, branch.label))
    return normalize_ensemble(Ensemble(tuple(branches)))


def _detection_pattern(layout, signs, detector):
    return [(ProjectionSpec(mode, sign), detector) for mode, sign in zip(layout.detection_modes, signs)]


@dataclass(frozen=True)
class HeraldOutcome:
    herald_probability: float
    conditional_ensemble: Ensemble
    fidelity: float
    qubit_fidelity: float
    qubit_probability: float


def evaluate_herald(state, layout, detector, signs, target):
    """
    Detection on the propagated ``state``. The qubit numbers restrict the
    heralded ensemble to exactly one photon per output mode.
    """
    probability, conditional = detect_pattern(Ensemble.from_state(state), _detection_pattern(layout, signs, detector))
    if conditional.is_empty() or probability <= 0:
        return HeraldOutcome(0.0, Ensemble(), 0.0, 0.0, 0.0)
    conditional = normalize_ensemble(conditional)
    full = fidelity(conditional, target)
    qubit_probability = math.fsum(
        b.weight * math.fsum(abs(a) ** 2 for a in _qubit_subspace(b.state, layout.output_modes).values())
        for b in conditional
    )
    qubit_fidelity = min(1.0, full / qubit_probability) if qubit_probability > 0 else 0.0
    return HeraldOutcome(min(1.0, probability), conditional, min(1.0, full), qubit_fidelity, qubit_probability)


@dataclass(frozen=True)
class HeraldResult:
    herald_probability: float
    conditional_ensemble: Ensemble
    fidelity: float
    qubit_fidelity: float
    qubit_probability: float
    target: StateVector
    target_label: str
    config: dict = field(default_factory=dict)
    probability_note: str = PROBABILITY_NOTE

    @property
    def heralded(self):
        return self.herald_probability > 0


def run_herald(source_config, detector, sign_pattern=None, reflection_phase=1 + 0j):
    """
    emission -> PBS rows -> detection on every heralding mode -> comparison
    with the GHZ target. A pattern that never fires gives probability 0.
    """
    n = source_config.n_crystals
    layout = build_circuit(n, reflection_phase)
    signs = parse_signs(sign_pattern or "+" * len(layout.detection_modes), len(layout.detection_modes))
    target = ghz_target(n, signs, source_config.delta_phi)
    state = propagate(emit_truncated(source_config), layout)
    outcome = evaluate_herald(state, layout, detector, signs, target)

    config = {
        "crystals": n,
        "orders": list(source_config.orders),
        "tau": source_config.tau,
        "delta_phi": source_config.delta_phi,
        "detector": detector.kind,
        "eta": detector.eta,
        "required_count": detector.required_count,
        "pattern": "".join(signs),
    }
    if outcome.herald_probability == 0:
        logger.warning(f"Pattern {''.join(signs)} never fires for {detector.label}; herald probability is 0.")
    else:
        logger.info(
            f"Herald n={n} {detector.label}: probability={outcome.herald_probability:.6g}, "
            f"fidelity={outcome.fidelity:.6g}, qubit fidelity={outcome.qubit_fidelity:.6g}."
        )
    return HeraldResult(
        herald_probability=outcome.herald_probability,
        conditional_ensemble=outcome.conditional_ensemble,
        fidelity=outcome.fidelity,
        qubit_fidelity=outcome.qubit_fidelity,
        qubit_probability=outcome.qubit_probability,
        target=target,
        target_label=target_label(n, signs, source_config.delta_phi),
        config=config,
    )


@dataclass(frozen=True)
class SweepRow:
    tau: float
    detector: str
    eta: float
    fidelity: float
    qubit_fidelity: float
    herald_probability: float
    qubit_probability: float


def _tau_rows(n_crystals, orders, delta_phi, layout, detector_models, signs, target, tau):
    state = propagate(emit_truncated(SourceConfig(n_crystals, delta_phi, tau, orders)), layout)
    rows = []
    for detector in detector_models:
        outcome = evaluate_herald(state, layout, detector, signs, target)
        rows.append(
            SweepRow(
                tau=float(tau),
                detector=detector.kind,
                eta=detector.eta,
                fidelity=outcome.fidelity,
                qubit_fidelity=outcome.qubit_fidelity,
                herald_probability=outcome.herald_probability,
                qubit_probability=outcome.qubit_probability,
            )
        )
    return rows


def sweep_tau(n_crystals, tau_grid, detector_models, orders=None, sign_pattern=None, delta_phi=0.0, threads=None):
    """
    One row per (tau, detector), tau-major. Defaults to the orders {2n, 2n+1};
    the emission is built once per tau and shared by every detector.
    """
    orders = tuple(orders or (2 * n_crystals, 2 * n_crystals + 1))
    layout = build_circuit(n_crystals)
    signs = parse_signs(sign_pattern or "+" * len(layout.detection_modes), len(layout.detection_modes))
    target = ghz_target(n_crystals, signs, delta_phi)
    detector_models = tuple(detector_models)
    evaluate = partial(_tau_rows, n_crystals, orders, delta_phi, layout, detector_models, signs, target)
    table = map_grid(evaluate, tau_grid, threads=threads, name="sweep_tau")
    return [row for rows in table for row in rows]


@dataclass(frozen=True)
class EtaRow:
    eta: float
    detector: str
    fidelity: float
    qubit_fidelity: float
    herald_probability: float
    probability_ratio: float


def _eta_row(state, layout, detector_kind, signs, target, reference_probability, eta):
    outcome = evaluate_herald(state, layout, DetectorModel(detector_kind, float(eta)), signs, target)
    ratio = outcome.herald_probability / reference_probability if reference_probability else 0.0
    return EtaRow(
        eta=float(eta),
        detector=detector_kind,
        fidelity=outcome.fidelity,
        qubit_fidelity=outcome.qubit_fidelity,
        herald_probability=outcome.herald_probability,
        probability_ratio=ratio,
    )


def sweep_eta(
    n_crystals,
    eta_grid,
    detector_kind="bucket",
    tau=0.05,
    orders=None,
    sign_pattern=None,
    delta_phi=0.0,
    threads=None,
):
    """
    Fidelity and herald probability versus detection efficiency, with the
    probability relative to lossless detection. Defaults to the 2n-pair orders.
    """
    orders = tuple(orders or (2 * n_crystals,))
    layout = build_circuit(n_crystals)
    signs = parse_signs(sign_pattern or "+" * len(layout.detection_modes), len(layout.detection_modes))
    target = ghz_target(n_crystals, signs, delta_phi)
    state = propagate(emit_truncated(SourceConfig(n_crystals, delta_phi, tau, orders)), layout)
    reference = evaluate_herald(state, layout, DetectorModel(detector_kind, 1.0), signs, target)
    evaluate = partial(_eta_row, state, layout, detector_kind, signs, target, reference.herald_probability)
    return map_grid(evaluate, eta_grid, threads=threads, name="sweep_eta")


def _noon_pattern(layout, signs):
    detector = DetectorModel.pnr(1.0, 1)
    return [(ProjectionSpec(mode, sign), detector) for mode, sign in zip(layout.primed_modes, signs)]


def _noon_signs(layout, sign_pattern):
    signs = parse_signs(sign_pattern or "-" + "+" * (len(layout.primed_modes) - 1), len(layout.primed_modes))
    if signs.count("-") % 2 == 0:
        raise InvalidPatternError(
            f"Interferometer pattern {''.join(signs)!r} needs an odd number of '-' outcomes."
        )
    return signs


def coincidence_probability(state, n_crystals, sign_pattern):
    """
    Probability that ``state`` (normalized here) fires the full coincidence of
    pnr(1) detectors on every primed mode behind the PBS rows.
    """
    layout = build_circuit(n_crystals)
    signs = parse_signs(sign_pattern, len(layout.primed_modes))
    probability, _ = detect_pattern(Ensemble.from_state(propagate(state, layout)), _noon_pattern(layout, signs))
    return probability


@dataclass(frozen=True)
class FringeScan:
    points: tuple
    n_crystals: int = None

    @property
    def phis(self):
        return np.array([phi for phi, _ in self.points], dtype=float)

    @property
    def probabilities(self):
        return np.array([p for _, p in self.points], dtype=float)

    def __len__(self):
        return len(self.points)


def _fringe_point(matrix, exponents, norm_squared, phi):
    amplitudes = matrix @ np.exp(2j * exponents * phi)
    probability = float(np.sum(np.abs(amplitudes) ** 2) / norm_squared)
    return (float(phi), min(1.0, max(0.0, probability)))


def noon_scan(n_crystals, phi_grid, sign_pattern=None, threads=None):
    """
    Full 4n-fold coincidence probability over ``phi_grid`` for the 2n-pair
    emission. The lossless detection map is linear, so the emission is split
    by its number of backward pairs k once and each phase point only
    recombines the parts with weights e^{i 2k dphi}.
    """
    layout = build_circuit(n_crystals)
    signs = _noon_signs(layout, sign_pattern)
    pattern = _noon_pattern(layout, signs)

    emitted = emit_order(build_pair_terms(n_crystals, 0.0), 2 * n_crystals, layout.registry)
    norm_squared = emitted.norm_squared()
    parts = {}
    for fock, amplitude in emitted:
        parts.setdefault(backward_pair_count(fock), {})[fock] = amplitude

    tables = {}
    for k, terms in sorted(parts.items()):
        part = propagate(StateVector(terms, layout.registry, prune_threshold=0.0), layout)
        for label, rest in conditional_amplitudes(part, pattern).items():
            for fock, amplitude in rest.items():
                tables.setdefault((label, fock), {})[k] = amplitude

    exponents = sorted(parts)
    matrix = np.array([[row.get(k, 0j) for k in exponents] for row in tables.values()], dtype=complex)
    matrix = matrix.reshape(len(tables), len(exponents))
    exponents = np.array(exponents, dtype=float)
    logger.debug(f"Interferometer n={n_crystals}: {len(tables)} coincidence amplitudes.")

    points = map_grid(partial(_fringe_point, matrix, exponents, norm_squared), phi_grid, threads=threads, name="noon_scan")
    return FringeScan(tuple(points), n_crystals)


def default_phi_grid(points):
    """``points`` samples over [0, pi), endpoint excluded."""
    return np.linspace(0.0, np.pi, int(points), endpoint=False)


def parity_check_state(n_crystals, delta_phi=0.0):
    """
    The three parity-check emission families behind both PBS rows, kept on the
    terms with one photon in every a' mode. Not normalized; the families carry
    the relative phases 1 : e^{i 4n dphi} : e^{i 2n dphi}, and the single-pair
    family also leaves terms with both polarizations in one b' mode.
    """
    layout = build_circuit(n_crystals)
    terms = build_pair_terms(n_crystals, 2.0 * delta_phi)
    emitted = StateVector.zero(layout.registry)
    for pair_counts in parity_families(n_crystals):
        emitted = add(emitted, emit_family(terms, pair_counts, layout.registry))
    state = propagate(emitted, layout)
    heralds = [mode for mode in layout.primed_modes if mode.side == "a"]
    kept = {fock: amplitude for fock, amplitude in state if all(fock.count_in(mode) == 1 for mode in heralds)}
    return StateVector(kept, layout.registry, prune_threshold=0.0)


@dataclass(frozen=True)
class FitResult:
    frequency: float
    visibility: float
    offset: float
    amplitude: float
    phase: float
    rms_residual: float
    samples: int


def _fringe_model(params, phis):
    amplitude, frequency, shift, offset = params
    return amplitude * (1 - np.cos(frequency * phis + shift)) + offset


def fit_fringe(scan, max_frequency=None):
    """
    Least-squares fit of ``A(1 - cos(f phi + delta)) + c``: linear fits on an
    integer frequency grid pick the start, then all four parameters are refined.
    """
    phis, values = scan.phis, scan.probabilities
    if len(values) < MIN_FIT_SAMPLES:
        raise DegenerateFitError(f"Fringe fit needs at least {MIN_FIT_SAMPLES} samples, got {len(values)}.")
    scale = float(np.max(np.abs(values)))
    if scale == 0 or np.ptp(values) <= 1e-12 * scale:
        raise DegenerateFitError("Fringe scan is constant; nothing to fit.")
    data = values / scale
    if not max_frequency:
        max_frequency = 8 * scan.n_crystals if scan.n_crystals else 64
    # frequencies below the sample count have no alias on [0, pi)
    max_frequency = min(max_frequency, len(values) - 1)

    best = None
    for frequency in range(1, max_frequency + 1):
        basis = np.column_stack([np.ones_like(phis), np.cos(frequency * phis), np.sin(frequency * phis)])
        coefficients, *_ = np.linalg.lstsq(basis, data, rcond=None)
        residual = float(np.sum((basis @ coefficients - data) ** 2))
        if best is None or residual < best[0] - 1e-15:
            best = (residual, frequency, coefficients)
    _, frequency, (c0, c1, c2) = best
    amplitude = math.hypot(c1, c2)
    shift = math.pi - math.atan2(c2, c1)
    start = np.array([amplitude, float(frequency), shift, c0 - amplitude])

    solution = optimize.least_squares(
        lambda p: _fringe_model(p, phis) - data,
        start,
        method="lm",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    amplitude, frequency, shift, offset = solution.x
    if amplitude < 0:
        amplitude, shift = -amplitude, shift + math.pi
        offset -= 2 * amplitude
    residuals = (_fringe_model(solution.x, phis) - data) * scale
    amplitude, offset = amplitude * scale, offset * scale
    top = 2 * amplitude + offset
    visibility = (top - offset) / (top + offset) if top + offset > 0 else 0.0

    result = FitResult(
        frequency=float(frequency),
        visibility=float(min(1.0, max(0.0, visibility))),
        offset=float(offset),
        amplitude=float(amplitude),
        phase=float(math.remainder(shift, 2 * math.pi)),
        rms_residual=float(np.sqrt(np.mean(residuals**2))),
        samples=len(values),
    )
    logger.info(f"Fringe fit: frequency={result.frequency:.9g}, visibility={result.visibility:.9g}.")
    return result


def phase_sensitivity(fit):
    """
    Minimum over the half period of sqrt(P(1-P))/|dP/dphi| for the normalized
    model P = (1 - V cos(N phi))/2.
    """
    visibility, frequency = fit.visibility, fit.frequency
    if visibility <= 0:
        raise DegenerateFitError("Phase sensitivity is undefined for zero visibility.")

    def spread(u):
        # u = N * phi, restricted to (0, pi)
        return math.sqrt(max(0.0, 1 - (visibility * math.cos(u)) ** 2)) / (visibility * frequency * abs(math.sin(u)))

    edge = 1e-6
    result = optimize.minimize_scalar(spread, bounds=(edge, math.pi - edge), method="bounded", options={"xatol": 1e-10})
    return float(min(result.fun, spread(math.pi / 2)))


def shot_noise_reference(photon_number):
    if photon_number <= 0:
        raise ValueError(f"Photon number must be positive, got {photon_number}")
    return 1.0 / math.sqrt(photon_number)


def sensitivity_report(fit):
    heisenberg = phase_sensitivity(fit)
    shot_noise = shot_noise_reference(round(fit.frequency))
    return {
        "heisenberg": heisenberg,
        "shot_noise": shot_noise,
        "ratio": shot_noise / heisenberg,
    }
