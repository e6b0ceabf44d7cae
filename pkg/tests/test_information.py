import numpy as np
import pytest

from poltomo import (
    InformationallyIncompleteError,
    ProtocolVariant,
    PureState,
    analysis_to_dict,
    analyze_protocol,
    build_coincidence_protocol,
    build_fuzzy_protocol,
    build_ideal_protocol,
    build_protocol,
    chi_squared_gof,
    closed_form_information,
    ghz_state,
    information_matrix,
    loss_to_z,
    normalized_full_information,
    octahedron_set,
    sample_loss_distribution,
)
from poltomo.information import gauge_projected_spectrum, loss_statistics
from poltomo.protocols import SingleQubitProjectorSet, build_ideal_protocol as _build


def random_state(rng, num_photons):
    a = rng.standard_normal(2**num_photons) + 1j * rng.standard_normal(2**num_photons)
    return PureState.from_amplitudes(a / np.linalg.norm(a))


class TestInformationMatrix:
    def test_symmetric_positive_semidefinite(self):
        protocol = build_fuzzy_protocol(octahedron_set(), 2, 1e4, 0.6)
        h = information_matrix(protocol, random_state(np.random.default_rng(0), 2))
        np.testing.assert_allclose(h, h.T, atol=1e-8)
        assert np.linalg.eigvalsh(h).min() >= -1e-6

    def test_trace_identities(self):
        """Tr H = 2 n s h with h the closed-form per-variant information."""
        rng = np.random.default_rng(5)
        oct8 = octahedron_set()
        n, eta = 1e4, 0.6
        for num in (1, 2, 3):
            psi = random_state(rng, num)
            s = 2**num
            trace = lambda p: np.trace(information_matrix(p, psi))
            assert trace(build_ideal_protocol(oct8, num, n)) == pytest.approx(
                2 * n * s, rel=1e-10
            )
            assert trace(build_fuzzy_protocol(oct8, num, n, eta)) == pytest.approx(
                2 * n * s * ((1 + eta) / 2) ** num, rel=1e-10
            )
            assert trace(build_coincidence_protocol(oct8, num, n, eta)) == pytest.approx(
                2 * n * s * eta**num, rel=1e-10
            )

    def test_linear_in_sample_size(self):
        psi = random_state(np.random.default_rng(6), 2)
        small = information_matrix(psi=psi, protocol=build_ideal_protocol(octahedron_set(), 2, 1e3))
        big = information_matrix(psi=psi, protocol=build_ideal_protocol(octahedron_set(), 2, 2e3))
        np.testing.assert_allclose(big, 2 * small, rtol=1e-12)

    def test_coincidence_is_scaled_ideal(self):
        """Coincidence keeps the ideal projectors with exposures scaled by
        eta^N, so the matrix scales by the same factor."""
        psi = random_state(np.random.default_rng(7), 2)
        ideal = information_matrix(build_ideal_protocol(octahedron_set(), 2, 1e4), psi)
        coinc = information_matrix(
            build_coincidence_protocol(octahedron_set(), 2, 1e4, 0.3), psi
        )
        np.testing.assert_allclose(coinc, 0.3**2 * ideal, rtol=1e-10)


class TestGaugeSpectrum:
    def test_spectrum_size(self):
        analysis = analyze_protocol(
            build_ideal_protocol(octahedron_set(), 3, 1e5), ghz_state(3)
        )
        assert analysis.spectrum.shape == (14,)
        assert np.all(analysis.spectrum > 0)

    def test_phase_gauge_invariance(self):
        protocol = build_fuzzy_protocol(octahedron_set(), 2, 1e4, 0.6)
        psi = random_state(np.random.default_rng(8), 2)
        rotated = PureState.from_amplitudes(np.exp(0.77j) * psi.amplitudes)
        a = analyze_protocol(protocol, psi)
        b = analyze_protocol(protocol, rotated)
        np.testing.assert_allclose(a.spectrum, b.spectrum, rtol=1e-8)
        assert a.mean_loss == pytest.approx(b.mean_loss, rel=1e-8)

    def test_incomplete_protocol_raises(self):
        """Two antipodal analyzers say nothing about the equatorial phase."""
        pair = SingleQubitProjectorSet(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]))
        protocol = _build(pair, 1, 1000)
        plus = PureState.from_amplitudes([2**-0.5, 2**-0.5])
        with pytest.raises(InformationallyIncompleteError, match="carry no information"):
            analyze_protocol(protocol, plus)

    def test_projected_spectrum_drops_gauge_directions(self):
        protocol = build_ideal_protocol(octahedron_set(), 2, 1e4)
        psi = random_state(np.random.default_rng(9), 2)
        h = information_matrix(protocol, psi)
        spectrum = gauge_projected_spectrum(h, psi)
        assert spectrum.shape == (6,)


class TestLossTheory:
    def test_ghz3_mean_losses(self):
        psi = ghz_state(3)
        oct8 = octahedron_set()
        ideal = analyze_protocol(build_ideal_protocol(oct8, 3, 1e5), psi)
        fuzzy = analyze_protocol(build_fuzzy_protocol(oct8, 3, 1e5, 0.2), psi)
        coinc = analyze_protocol(build_coincidence_protocol(oct8, 3, 1e5, 0.2), psi)
        assert ideal.mean_loss == pytest.approx(7.74e-5, rel=0.1)
        assert fuzzy.mean_loss == pytest.approx(2.74e-3, rel=0.1)
        assert coinc.mean_loss == pytest.approx(9.67e-3, rel=0.1)
        assert fuzzy.mean_loss < coinc.mean_loss

    def test_mean_loss_scales_inversely_with_samples(self):
        psi = ghz_state(2)
        loss = lambda n: analyze_protocol(
            build_fuzzy_protocol(octahedron_set(), 2, n, 0.4), psi
        ).mean_loss
        assert loss(2e4) == pytest.approx(loss(1e4) / 2, rel=1e-12)

    def test_loss_statistics(self):
        spectrum = np.array([10.0, 4.0, 2.0])
        d, total = loss_statistics(spectrum)
        np.testing.assert_allclose(d, [0.05, 0.125, 0.25])
        assert total == pytest.approx(0.425)
        with pytest.raises(ValueError):
            loss_statistics(np.array([1.0, 0.0]))

    def test_loss_to_z(self):
        assert loss_to_z(1e-3) == pytest.approx(3.0)
        np.testing.assert_allclose(
            loss_to_z(np.array([0.1, 0.01])), [1.0, 2.0], rtol=1e-12
        )


class TestClosedForms:
    def test_reference_values(self):
        assert closed_form_information(ProtocolVariant.IDEAL, 3, 1.0) == 1.0
        assert closed_form_information(
            ProtocolVariant.COINCIDENCE, 3, 0.2
        ) == pytest.approx(0.008)
        assert closed_form_information(ProtocolVariant.FUZZY, 3, 0.2) == pytest.approx(
            0.216
        )
        ratio = closed_form_information(
            ProtocolVariant.FUZZY, 3, 0.2
        ) / closed_form_information(ProtocolVariant.COINCIDENCE, 3, 0.2)
        assert ratio == pytest.approx(27.0)

    def test_fuzzy_beats_coincidence_below_unit_efficiency(self):
        for num in (1, 2, 3):
            for eta in (0.1, 0.5, 0.9):
                fuzzy = closed_form_information(ProtocolVariant.FUZZY, num, eta)
                coinc = closed_form_information(ProtocolVariant.COINCIDENCE, num, eta)
                assert fuzzy > coinc

    def test_matches_normalized_trace(self):
        """h = Tr H / (2 n s) equals the closed form on generic states."""
        rng = np.random.default_rng(10)
        for num in (1, 2):
            psi = random_state(rng, num)
            for variant in ProtocolVariant:
                for eta in (0.35, 1.0):
                    protocol = build_protocol(variant, octahedron_set(), num, 1e4, eta)
                    assert normalized_full_information(protocol, psi) == pytest.approx(
                        closed_form_information(variant, num, eta), abs=1e-10
                    )


class TestSampleLossDistribution:
    def test_deterministic(self):
        d = np.array([1e-3, 5e-4])
        a = sample_loss_distribution(d, 1000, 42)
        np.testing.assert_array_equal(a, sample_loss_distribution(d, 1000, 42))
        assert not np.array_equal(a, sample_loss_distribution(d, 1000, 43))

    def test_single_coefficient_moments(self):
        """Samples are z = -log10(d * chi^2_1); the analytic mean is
        -log10(d) + (euler_gamma + ln 2)/ln 10 and the variance is
        (pi^2 / 2) / ln(10)^2."""
        d0 = 2e-3
        samples = sample_loss_distribution(np.array([d0]), 1_000_000, 5)
        mean_z = -np.log10(d0) + (np.euler_gamma + np.log(2)) / np.log(10)
        var_z = (np.pi**2 / 2) / np.log(10) ** 2
        se = np.sqrt(var_z / samples.size)
        assert samples.mean() == pytest.approx(mean_z, abs=4 * se)
        losses = 10.0 ** (-samples)
        se_loss = d0 * np.sqrt(2.0 / losses.size)
        assert losses.mean() == pytest.approx(d0, abs=4 * se_loss)

    def test_back_transformed_mean_matches_analysis(self):
        """Undoing the log recovers the loss samples, whose mean is the
        analytic mean loss."""
        analysis = analyze_protocol(
            build_fuzzy_protocol(octahedron_set(), 3, 1e5, 0.6), ghz_state(3)
        )
        samples = sample_loss_distribution(analysis.loss_coefficients, 1_000_000, 6)
        losses = 10.0 ** (-samples)
        se = losses.std() / np.sqrt(losses.size)
        assert losses.mean() == pytest.approx(analysis.mean_loss, abs=4 * se)


class TestChiSquaredGof:
    D = np.array([5e-4, 2e-4, 1e-4])

    def test_well_calibrated_across_trials(self):
        """Same-distribution trials rarely fall below p = 0.01; the binomial
        envelope for 200 trials puts the count of failures at 0..7."""
        failures = 0
        for i in range(200):
            emp = sample_loss_distribution(self.D, 50, 1000 + i)
            theo = sample_loss_distribution(self.D, 5000, 500_000 + i)
            if chi_squared_gof(emp, theo, 10).p_value < 0.01:
                failures += 1
        assert failures <= 7

    def test_detects_shifted_distribution(self):
        theo = sample_loss_distribution(self.D, 40_000, 2)
        emp = sample_loss_distribution(self.D, 200, 1) + 0.5
        assert chi_squared_gof(emp, theo, 10).p_value < 1e-6

    def test_identical_multisets_score_zero(self):
        x = sample_loss_distribution(self.D, 2000, 99)
        result = chi_squared_gof(x, x, 10)
        assert result.statistic <= result.degrees_of_freedom
        assert result.degrees_of_freedom == 9
        assert result.p_value > 0.5

    def test_rejects_small_empirical(self):
        theo = sample_loss_distribution(self.D, 5000, 3)
        emp = sample_loss_distribution(self.D, 30, 4)
        with pytest.raises(ValueError, match="fewer bins"):
            chi_squared_gof(emp, theo, 10)

    def test_rejects_degenerate_binning(self):
        emp = sample_loss_distribution(self.D, 200, 4)
        with pytest.raises(ValueError, match="fewer bins"):
            chi_squared_gof(emp, np.full(40_000, 1.0), 10)
        with pytest.raises(ValueError):
            chi_squared_gof(emp, np.full(40_000, 1.0), 1)


class TestAnalysisSerialization:
    def test_dict_round_trip_fields(self):
        analysis = analyze_protocol(
            build_ideal_protocol(octahedron_set(), 2, 1e4),
            random_state(np.random.default_rng(11), 2),
        )
        data = analysis_to_dict(analysis)
        assert set(data) == {
            "spectrum",
            "loss_coefficients",
            "mean_loss",
            "normalized_information",
        }
        assert data["mean_loss"] == pytest.approx(sum(data["loss_coefficients"]))
        np.testing.assert_allclose(
            1.0 / (2.0 * np.asarray(data["spectrum"])),
            np.asarray(data["loss_coefficients"]),
        )
        assert data["normalized_information"] == pytest.approx(1.0, abs=1e-10)
