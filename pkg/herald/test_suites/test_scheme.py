# herald/test_suites/test_scheme.py

import cmath
import math
import re
from fractions import Fraction
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from herald.exceptions import DegenerateFitError, InvalidCircuitError, InvalidPatternError, ModeSupportError
from herald.fock import FockState, SpatialMode, StateVector
from herald.optics import DetectorModel, Ensemble
from herald.scheme import (
    FitResult,
    FringeScan,
    build_circuit,
    coincidence_probability,
    default_phi_grid,
    fidelity,
    fidelity_up_to_local_phases,
    fit_fringe,
    ghz_target,
    noon_scan,
    parity_check_state,
    phase_sensitivity,
    qubit_projection,
    run_herald,
    sensitivity_report,
    shot_noise_reference,
    sweep_eta,
    sweep_tau,
)
from herald.source import SourceConfig, build_pair_terms, emit_family, emit_truncated

# Herald probability of the all-plus pattern on the 4-pair manifold at dphi = 0.
BELL_HERALD_PROBABILITY = 1 / 1320
# Coincidence fringe amplitude A in A(1 - cos 8 dphi) for two crystals.
NOON_TWO_CRYSTAL_AMPLITUDE = 1 / 42240
NOON_PATTERN_N2 = "-" + "+" * 7
NOON_PATTERN_N3 = "-" + "+" * 11
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"
GOLDEN_PHASE = re.compile(r"e\^\(i (-?\d+) dphi\)")
GOLDEN_TERM = re.compile(r"(-?\d+)/(\d+) \* 2\^\(-0/2\) \* e\^\(i (-?\d+) dphi\)")


def labels(modes):
    return [str(mode) for mode in modes]


def synthetic_scan(values, phis):
    return FringeScan(tuple(zip(phis.tolist(), values.tolist())))


def read_golden(name):
    return (GOLDEN_DIR / name).read_text(encoding="utf-8").splitlines()


class CircuitTest(SimpleTestCase):
    def test_two_crystal_layout(self):
        """
        Left PBSs pair (a2,a3),(a4,a1); right ones (b1,b2),(b3,b4).
        """
        layout = build_circuit(2)
        self.assertEqual([labels(p.inputs) for p in layout.pbs_left], [["a2", "a3"], ["a4", "a1"]])
        self.assertEqual([labels(p.inputs) for p in layout.pbs_right], [["b1", "b2"], ["b3", "b4"]])
        self.assertEqual(labels(layout.detection_modes), ["a1'", "a2'", "a3'", "a4'", "b1'", "b3'"])
        self.assertEqual(labels(layout.output_modes), ["b2'", "b4'"])

    def test_layouts_partition_primed_modes(self):
        """
        Detection and output modes partition the primed modes for n = 3 and 4.
        """
        for n in (3, 4):
            with self.subTest(n=n):
                layout = build_circuit(n)
                self.assertEqual(len(layout.pbs_left), n)
                self.assertEqual(len(layout.pbs_right), n)
                self.assertEqual(len(layout.detection_modes), 3 * n)
                self.assertEqual(labels(layout.output_modes), [f"b{2 * j}'" for j in range(1, n + 1)])
                self.assertFalse(set(layout.detection_modes) & set(layout.output_modes))
                self.assertEqual(len(layout.primed_modes), 4 * n)

    def test_single_crystal_is_rejected(self):
        """
        n < 2 raises InvalidCircuitError.
        """
        with self.assertRaises(InvalidCircuitError):
            build_circuit(1)


class TargetTest(SimpleTestCase):
    def test_bell_targets(self):
        """
        All-plus gives Phi+; a minus on a2' gives Phi-.
        """
        hh = FockState.parse("b2'H:1 b4'H:1")
        vv = FockState.parse("b2'V:1 b4'V:1")
        r = 1 / math.sqrt(2)
        plus = ghz_target(2, "++++++")
        minus = ghz_target(2, "+-++++")
        self.assertAlmostEqual(abs(plus.amplitude(hh) - r), 0.0, delta=1e-15)
        self.assertAlmostEqual(abs(plus.amplitude(vv) - r), 0.0, delta=1e-15)
        self.assertAlmostEqual(abs(minus.amplitude(vv) + r), 0.0, delta=1e-15)

    def test_ghz3_target(self):
        """
        Three crystals give (|HHH> + |VVV>)/sqrt(2) on b2', b4', b6'.
        """
        target = ghz_target(3)
        self.assertEqual(len(target), 2)
        self.assertEqual(labels(sorted(target.spatial_support())), ["b2'", "b4'", "b6'"])
        self.assertAlmostEqual(target.norm_squared(), 1.0, delta=1e-15)


class HeraldTest(SimpleTestCase):
    def test_bell_herald(self):
        """
        Two crystals, bucket detectors: unit fidelity on one photon per output.

        The full heralded ensemble also holds |HV> in one output with the other
        empty, so its fidelity is one half.
        """
        result = run_herald(SourceConfig.weak(2), DetectorModel.bucket(), "++++++")
        self.assertAlmostEqual(result.qubit_fidelity, 1.0, delta=1e-10)
        self.assertAlmostEqual(result.fidelity, 0.5, delta=1e-10)
        self.assertAlmostEqual(result.qubit_probability, 0.5, delta=1e-10)
        self.assertAlmostEqual(result.herald_probability, BELL_HERALD_PROBABILITY, delta=1e-12)
        self.assertEqual(result.target_label, "GHZ2(+,phase=0)")

    def test_minus_on_even_mode_flips_the_target(self):
        """
        A minus outcome on a2' heralds Phi- with unit fidelity.
        """
        result = run_herald(SourceConfig.weak(2), DetectorModel.bucket(), "+-++++")
        self.assertAlmostEqual(result.qubit_fidelity, 1.0, delta=1e-10)
        self.assertTrue(result.target_label.startswith("GHZ2(-"))

    def test_minus_on_odd_mode_changes_the_rate(self):
        """
        A minus on a1' rescales the rate by sin^2(2 dphi) instead of cos^2(2 dphi).
        """
        dphi = 0.3
        reference = run_herald(SourceConfig.weak(2), DetectorModel.bucket(), "++++++").herald_probability
        plus = run_herald(SourceConfig.weak(2, delta_phi=dphi), DetectorModel.bucket(), "++++++")
        minus = run_herald(SourceConfig.weak(2, delta_phi=dphi), DetectorModel.bucket(), "-+++++")
        self.assertAlmostEqual(plus.herald_probability / reference, math.cos(2 * dphi) ** 2, delta=1e-10)
        self.assertAlmostEqual(minus.herald_probability / reference, math.sin(2 * dphi) ** 2, delta=1e-10)
        self.assertAlmostEqual(minus.qubit_fidelity, 1.0, delta=1e-10)
        silent = run_herald(SourceConfig.weak(2), DetectorModel.bucket(), "-+++++")
        self.assertFalse(silent.heralded)

    def test_ghz3_herald(self):
        """
        Three crystals herald GHZ-3 on one photon per output.
        """
        result = run_herald(SourceConfig.weak(3), DetectorModel.bucket(), "+" * 9)
        self.assertAlmostEqual(result.qubit_fidelity, 1.0, delta=1e-10)
        self.assertAlmostEqual(result.fidelity, 0.25, delta=1e-10)
        self.assertAlmostEqual(result.qubit_probability, 0.25, delta=1e-10)

    def test_efficiency_independence(self):
        """
        Fidelity is flat in eta and the rate scales as eta^6.
        """
        reference = run_herald(SourceConfig.weak(2), DetectorModel.bucket(1.0), "++++++")
        for eta in (0.2, 0.5, 0.8):
            with self.subTest(eta=eta):
                result = run_herald(SourceConfig.weak(2), DetectorModel.bucket(eta), "++++++")
                self.assertAlmostEqual(result.fidelity, reference.fidelity, delta=1e-9)
                self.assertAlmostEqual(result.qubit_fidelity, reference.qubit_fidelity, delta=1e-9)
                self.assertAlmostEqual(result.herald_probability / reference.herald_probability, eta**6, delta=1e-9)

    def test_suppression_bucket_equals_pnr(self):
        """
        On the 2n-pair manifold bucket and pnr(1) heralding rates agree.
        """
        for n in (2, 3):
            with self.subTest(n=n):
                bucket = run_herald(SourceConfig.weak(n), DetectorModel.bucket(), "+" * (3 * n))
                pnr = run_herald(SourceConfig.weak(n), DetectorModel.pnr(), "+" * (3 * n))
                self.assertAlmostEqual(bucket.herald_probability, pnr.herald_probability, delta=1e-12)

    def test_reflection_phase_is_a_local_gauge(self):
        """
        An i reflection phase leaves the one-photon-per-output fidelity up to
        local phases unchanged. The rate may move, since the phase also lands
        on the herald modes.
        """
        dphi = 0.3
        for n in (2, 3):
            outputs = build_circuit(n).output_modes
            values = []
            for reflection_phase in (1 + 0j, 1j):
                source = SourceConfig.weak(n, delta_phi=dphi)
                result = run_herald(source, DetectorModel.bucket(), "+" * (3 * n), reflection_phase)
                self.assertTrue(result.heralded)
                projected = qubit_projection(result.conditional_ensemble, outputs)
                values.append(fidelity_up_to_local_phases(projected, result.target))
            with self.subTest(n=n):
                self.assertAlmostEqual(values[0], values[1], delta=1e-9)
                self.assertAlmostEqual(values[1], 1.0, delta=1e-9)

    def test_pattern_length_is_checked(self):
        """
        A pattern with the wrong number of signs raises InvalidPatternError.
        """
        with self.assertRaises(InvalidPatternError):
            run_herald(SourceConfig.weak(2), DetectorModel.bucket(), "++++")

    def test_fidelity_support_mismatch(self):
        """
        An ensemble on modes outside the target raises ModeSupportError.
        """
        target = ghz_target(2)
        stray = StateVector({FockState.parse("a1'H:1"): 1.0}, target.registry)
        with self.assertRaises(ModeSupportError):
            fidelity(Ensemble.from_state(stray), target)


class StrongRegimeTest(SimpleTestCase):
    # heralded-ensemble fidelities on orders {4, 5}, dphi = 0
    EXPECTED = {
        0.001: (0.4999980000, 0.4999990000),
        0.01: (0.4998001649, 0.4999000300),
        0.05: (0.4951010410, 0.4975186104),
        0.1: (0.4815242494, 0.4902912621),
    }

    def setUp(self):
        self.taus = sorted(self.EXPECTED)
        self.rows = sweep_tau(2, self.taus, [DetectorModel.bucket(), DetectorModel.pnr()])

    def test_row_layout(self):
        """
        One row per (tau, detector), tau-major.
        """
        self.assertEqual(len(self.rows), 2 * len(self.taus))
        self.assertEqual([row.detector for row in self.rows[:2]], ["bucket", "pnr"])
        self.assertEqual([row.tau for row in self.rows[::2]], self.taus)

    def test_fidelity_values(self):
        """
        Bucket and pnr fidelities follow the tabulated values.
        """
        for row in self.rows:
            with self.subTest(tau=row.tau, detector=row.detector):
                bucket, pnr = self.EXPECTED[row.tau]
                expected = bucket if row.detector == "bucket" else pnr
                self.assertAlmostEqual(row.fidelity, expected, delta=1e-8)
                self.assertAlmostEqual(row.qubit_fidelity, 1.0, delta=1e-9)

    def test_ordering(self):
        """
        Bucket fidelity falls with tau; pnr never does worse than bucket.
        """
        bucket = [row.fidelity for row in self.rows if row.detector == "bucket"]
        pnr = [row.fidelity for row in self.rows if row.detector == "pnr"]
        self.assertEqual(bucket, sorted(bucket, reverse=True))
        for b, p in zip(bucket, pnr):
            self.assertGreaterEqual(p, b)
        self.assertLess(bucket[-1], 1.0)

    def test_pooled_sweep_matches_inline(self):
        """
        Rows from a two-worker sweep equal the inline rows.
        """
        pooled = sweep_tau(2, self.taus, [DetectorModel.bucket(), DetectorModel.pnr()], threads=2)
        self.assertEqual(pooled, self.rows)


class EtaSweepTest(SimpleTestCase):
    def test_rate_ratio_follows_eta_power(self):
        """
        The eta-scan rows report the rate relative to lossless detection.
        """
        rows = sweep_eta(2, [0.2, 0.5, 1.0])
        for row in rows:
            with self.subTest(eta=row.eta):
                self.assertAlmostEqual(row.probability_ratio, row.eta**6, delta=1e-9)
                self.assertAlmostEqual(row.qubit_fidelity, 1.0, delta=1e-9)


class InterferometerTest(SimpleTestCase):
    def test_two_crystal_fringe_values(self):
        """
        P(dphi) = A (1 - cos 8 dphi) with the tabulated A.
        """
        phis = [0.0, 0.1, math.pi / 16, math.pi / 8, 0.5]
        scan = noon_scan(2, phis, NOON_PATTERN_N2)
        for phi, probability in scan.points:
            with self.subTest(phi=phi):
                expected = NOON_TWO_CRYSTAL_AMPLITUDE * (1 - math.cos(8 * phi))
                self.assertAlmostEqual(probability, expected, delta=1e-14)

    def test_scan_matches_direct_evaluation(self):
        """
        The phase-resolved scan equals a direct run at one phase.
        """
        phi = 0.37
        scan = noon_scan(2, [phi], NOON_PATTERN_N2)
        direct = coincidence_probability(emit_truncated(SourceConfig.weak(2, delta_phi=phi)), 2, NOON_PATTERN_N2)
        self.assertAlmostEqual(scan.points[0][1], direct, delta=1e-14)

    def test_even_minus_count_is_rejected(self):
        """
        Patterns with an even number of minus signs are refused.
        """
        with self.assertRaises(InvalidPatternError):
            noon_scan(2, [0.1], "--++++++")

    def test_fringe_law(self):
        """
        Fitted frequency 4n with unit visibility for n = 2 and 3.
        """
        for n, pattern, points in ((2, NOON_PATTERN_N2, 128), (3, NOON_PATTERN_N3, 64)):
            with self.subTest(n=n):
                fit = fit_fringe(noon_scan(n, default_phi_grid(points), pattern))
                self.assertAlmostEqual(fit.frequency, 4 * n, delta=1e-6)
                self.assertGreater(fit.visibility, 1 - 1e-9)
                self.assertLess(fit.rms_residual, 1e-9)

    def test_fringe_law_on_short_scans(self):
        """
        Sixteen samples still resolve the 4n frequency for three crystals.
        """
        for points in (16, 20, 23):
            with self.subTest(points=points):
                fit = fit_fringe(noon_scan(3, default_phi_grid(points), NOON_PATTERN_N3))
                self.assertAlmostEqual(fit.frequency, 12.0, delta=1e-6)
                self.assertGreater(fit.visibility, 1 - 1e-9)

    def test_pooled_scan_matches_inline(self):
        """
        A two-worker scan returns the inline points in input order.
        """
        phis = default_phi_grid(16)
        inline = noon_scan(2, phis, NOON_PATTERN_N2, threads=1)
        pooled = noon_scan(2, phis, NOON_PATTERN_N2, threads=2)
        self.assertEqual(pooled.points, inline.points)
        self.assertEqual(pooled.n_crystals, 2)

    def test_three_crystal_fringe_amplitude(self):
        """
        Three crystals at dphi = pi/24 sit at the fringe midpoint.
        """
        scan = noon_scan(3, [math.pi / 24], NOON_PATTERN_N3)
        self.assertAlmostEqual(scan.points[0][1], 3.945e-8, delta=1e-10)

    def test_single_pair_family_is_eliminated(self):
        """
        One pair into every mode pair never fires the full coincidence.
        """
        terms = build_pair_terms(2, 0.6)
        family = emit_family(terms, {m: 1 for m in range(1, 5)})
        self.assertAlmostEqual(coincidence_probability(family, 2, NOON_PATTERN_N2), 0.0, delta=1e-12)
        double = emit_family(terms, {2: 2, 4: 2})
        self.assertGreater(coincidence_probability(double, 2, NOON_PATTERN_N2), 1e-6)

    def test_failure_mode_family(self):
        """
        Three pairs into a2&b2 with one into a4&b4 leaves a1', a4' dark.
        """
        family = emit_family(build_pair_terms(2, 0.0), {2: 3, 4: 1})
        self.assertEqual(coincidence_probability(family, 2, NOON_PATTERN_N2), 0.0)

    def test_parity_check_state_phases(self):
        """
        One photon per a' mode leaves the families 1, e^{i4 dphi}, e^{i8 dphi}.
        """
        dphi = 0.21
        reference = parity_check_state(2, 0.0)
        shifted = parity_check_state(2, dphi)
        ratios = set()
        for fock, amplitude in shifted:
            ratio = amplitude / reference.amplitude(fock)
            ratios.add(round(math.remainder(np.angle(ratio) / dphi, 2 * math.pi / dphi)))
        self.assertEqual(ratios, {0, 4, 8})


    def test_parity_check_matches_golden_files(self):
        """
        Every golden term appears with amplitude e^{iK dphi} and nothing else survives.
        """
        for n in (2, 3):
            expected = {}
            for line in read_golden(f"parity_check_n{n}.txt"):
                term, amplitude = line.split("\t")
                expected[FockState.parse(term)] = int(GOLDEN_PHASE.search(amplitude).group(1))
            for dphi in (0.0, 0.21, 1.3):
                with self.subTest(n=n, dphi=dphi):
                    state = parity_check_state(n, dphi)
                    self.assertEqual(set(state.terms), set(expected))
                    for fock, exponent in expected.items():
                        deviation = abs(state.amplitude(fock) - cmath.exp(1j * exponent * dphi))
                        self.assertAlmostEqual(deviation, 0.0, delta=1e-12)

    def test_fringe_matches_golden_file(self):
        """
        The two-crystal scan reproduces the committed exact fringe.
        """
        (line,) = read_golden("coincidence_n2.txt")
        coefficients = {int(k): Fraction(int(p), int(q)) for p, q, k in GOLDEN_TERM.findall(line)}
        self.assertEqual(sorted(coefficients), [-8, 0, 8])
        phis = [0.05, 0.4, 2.2]
        for phi, probability in noon_scan(2, phis, NOON_PATTERN_N2).points:
            with self.subTest(phi=phi):
                expected = sum(float(c) * cmath.exp(1j * k * phi) for k, c in coefficients.items()).real
                self.assertAlmostEqual(probability, expected, delta=1e-14)


class FringeFitTest(SimpleTestCase):
    def setUp(self):
        self.phis = default_phi_grid(128)

    def test_exact_model(self):
        """
        1 - cos(8 phi) fits to frequency 8 and visibility 1.
        """
        fit = fit_fringe(synthetic_scan(1 - np.cos(8 * self.phis), self.phis))
        self.assertAlmostEqual(fit.frequency, 8.0, delta=1e-6)
        self.assertAlmostEqual(fit.visibility, 1.0, delta=1e-6)

    def test_offset_recovered(self):
        """
        An additive offset of 0.1 is returned as the fitted offset.
        """
        fit = fit_fringe(synthetic_scan(1 - np.cos(8 * self.phis) + 0.1, self.phis))
        self.assertAlmostEqual(fit.offset, 0.1, delta=1e-6)
        self.assertAlmostEqual(fit.visibility, 1 / 1.1, delta=1e-6)

    def test_degenerate_scans(self):
        """
        Constant or too short scans raise DegenerateFitError.
        """
        with self.assertRaises(DegenerateFitError):
            fit_fringe(synthetic_scan(np.full(32, 0.3), self.phis[:32]))
        with self.assertRaises(DegenerateFitError):
            fit_fringe(synthetic_scan(1 - np.cos(8 * self.phis[:8]), self.phis[:8]))


class SensitivityTest(SimpleTestCase):
    def fit(self, frequency, visibility):
        return FitResult(frequency, visibility, 0.0, 0.5, 0.0, 0.0, 128)

    def test_unit_visibility(self):
        """
        Unit-visibility fringes reach 1/N.
        """
        self.assertAlmostEqual(phase_sensitivity(self.fit(8, 1.0)), 1 / 8, delta=1e-9)
        self.assertAlmostEqual(phase_sensitivity(self.fit(12, 1.0)), 1 / 12, delta=1e-9)

    def test_reduced_visibility(self):
        """
        Half visibility is strictly worse than 1/N.
        """
        self.assertGreater(phase_sensitivity(self.fit(8, 0.5)), 1 / 8)
        with self.assertRaises(DegenerateFitError):
            phase_sensitivity(self.fit(8, 0.0))

    def test_report_against_shot_noise(self):
        """
        The report compares 1/N with 1/sqrt(N).
        """
        report = sensitivity_report(self.fit(8, 1.0))
        self.assertAlmostEqual(report["shot_noise"], shot_noise_reference(8), delta=1e-15)
        self.assertAlmostEqual(report["ratio"], math.sqrt(8), delta=1e-8)
