import json

import numpy as np
import pytest

from poltomo import (
    ExperimentConfig,
    NumericalFailure,
    ProtocolVariant,
    SolverOptions,
    derive_seed,
    load_config,
    run_experiment,
    run_pair,
)
from poltomo.experiment import (
    Z_BIN_WIDTH,
    config_echo,
    config_from_dict,
    pair_tag,
    z_histogram_edges,
)


def base_raw(**overrides):
    raw = {
        "state": {"ghz": 1},
        "variants": ["fuzzy"],
        "n": 500,
        "eta": [0.6],
        "num_experiments": 6,
        "master_seed": 77,
        "theory_samples": 2000,
    }
    raw.update(overrides)
    return raw


class TestDeriveSeed:
    def test_deterministic_and_distinct(self):
        a = derive_seed(1, "counts", "fuzzy", 0.6, 0)
        assert a == derive_seed(1, "counts", "fuzzy", 0.6, 0)
        others = [
            derive_seed(2, "counts", "fuzzy", 0.6, 0),
            derive_seed(1, "init", "fuzzy", 0.6, 0),
            derive_seed(1, "counts", "ideal", 0.6, 0),
            derive_seed(1, "counts", "fuzzy", 0.7, 0),
            derive_seed(1, "counts", "fuzzy", 0.6, 1),
        ]
        assert len({a, *others}) == 6

    def test_u64_range(self):
        for seed in (0, 123456789, 2**63):
            value = derive_seed(seed, "theory", "ideal", 1.0)
            assert 0 <= value < 2**64

    def test_eta_keyed_by_repr(self):
        """0.6 and 0.60000000000000001 repr identically and share a stream;
        a genuinely different float does not."""
        assert derive_seed(1, 0.6) == derive_seed(1, 0.60000000000000001)
        assert derive_seed(1, 0.6) != derive_seed(1, 0.6000000000000001)


class TestConfigParsing:
    def test_load_config_round_trip(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(base_raw()))
        config = load_config(path)
        assert config.sample_size == 500.0
        assert config.etas == (0.6,)
        assert config.variants == (ProtocolVariant.FUZZY,)
        assert config.state.num_photons == 1

    @pytest.mark.parametrize(
        "key", ["state", "variants", "n", "eta", "num_experiments", "master_seed"]
    )
    def test_missing_field_names_it(self, key):
        raw = base_raw()
        del raw[key]
        with pytest.raises(ValueError, match=key):
            config_from_dict(raw)

    def test_explicit_amplitudes(self):
        raw = base_raw(state={"amplitudes": [[0.6, 0.0], [0.0, 0.8]]})
        config = config_from_dict(raw)
        np.testing.assert_allclose(config.state.amplitudes, [0.6, 0.8j])

    @pytest.mark.parametrize(
        "raw,fragment",
        [
            (base_raw(state={"amplitudes": [[1.0, 0.0], [1.0, 0.0]]}), "not normalized"),
            (base_raw(state={"wrong": 1}), "state"),
            (base_raw(variants=["bogus"]), "unknown protocol variant"),
            (base_raw(variants=[]), "must not be empty"),
            (base_raw(eta=[0.0]), r"\(0, 1\]"),
            (base_raw(eta=[1.2]), r"\(0, 1\]"),
            (base_raw(n=-5), "positive"),
            (base_raw(num_experiments=-1), ">= 0"),
            (base_raw(master_seed=-1), "64-bit"),
            (base_raw(m1_set="dodecahedron"), "unknown m1_set"),
            (base_raw(chi2_bins=1), ">= 2"),
            (base_raw(solver={"nonsense": 1}), "solver"),
        ],
    )
    def test_rejects_bad_values(self, raw, fragment):
        with pytest.raises(ValueError, match=fragment):
            config_from_dict(raw)

    def test_echo_preserves_inputs(self):
        config = config_from_dict(base_raw())
        echo = config_echo(config)
        assert echo["n"] == 500.0
        assert echo["eta"] == [0.6]
        assert echo["master_seed"] == 77
        assert echo["solver"]["damping"] == 0.5
        assert echo["state"]["num_photons"] == 1


class TestPairTag:
    def test_format(self):
        assert pair_tag(ProtocolVariant.FUZZY, 0.6) == "fuzzy_eta0.6"
        assert pair_tag(ProtocolVariant.IDEAL, 1.0) == "ideal_eta1"


class TestZHistogramEdges:
    def test_fixed_width_bins_from_zero(self):
        edges = z_histogram_edges(np.array([0.31, 2.04]))
        assert edges[0] == 0.0
        np.testing.assert_allclose(np.diff(edges), Z_BIN_WIDTH)
        assert edges[-1] >= 2.04


class TestRunPair:
    def test_theory_only(self):
        config = config_from_dict(base_raw(num_experiments=0))
        result = run_pair(config, ProtocolVariant.FUZZY, 0.6)
        assert "empirical" not in result
        assert result["theory"]["mean_loss"] > 0
        assert result["theory"]["normalized_information"] == pytest.approx(
            result["theory"]["closed_form_information"], abs=1e-10
        )
        assert result["_z_theory"].shape == (2000,)
        assert result["protocol"]["num_elements"] == 9
        assert result["protocol"]["unity_residual"] <= 1e-10

    def test_small_run_skips_chi_squared(self):
        config = config_from_dict(base_raw())
        result = run_pair(config, ProtocolVariant.FUZZY, 0.6)
        empirical = result["empirical"]
        assert empirical["num_experiments"] == 6
        assert empirical["non_converged"] == 0
        assert empirical["chi_squared"] is None
        assert empirical["mean_loss"] > 0
        assert len(result["_runs"]) == 6

    def test_parallel_matches_serial(self):
        config = config_from_dict(base_raw())
        serial = run_pair(config, ProtocolVariant.FUZZY, 0.6, workers=1)
        parallel = run_pair(config, ProtocolVariant.FUZZY, 0.6, workers=2)
        assert serial["_runs"] == parallel["_runs"]

    def test_widespread_non_convergence_raises(self):
        config = config_from_dict(
            base_raw(solver={"max_iterations": 1, "restarts": 1, "tolerance": 1e-14})
        )
        with pytest.raises(NumericalFailure, match="did not converge"):
            run_pair(config, ProtocolVariant.FUZZY, 0.6)


class TestRunExperiment:
    def test_writes_report_and_artifacts(self, tmp_path):
        config = config_from_dict(base_raw(variants=["ideal", "fuzzy"]))
        report = run_experiment(config, tmp_path)
        assert len(report["results"]) == 2
        tags = [f"{r['variant']}_eta{r['eta']:g}" for r in report["results"]]
        assert tags == ["ideal_eta0.6", "fuzzy_eta0.6"]
        for tag in tags:
            for name in (
                f"runs_{tag}.csv",
                f"z_empirical_{tag}.csv",
                f"z_theory_{tag}.csv",
                f"z_histogram_{tag}.csv",
                f"z_distribution_{tag}.png",
            ):
                assert (tmp_path / name).stat().st_size > 0
        assert (tmp_path / "report.json").exists()
        assert (tmp_path / "z_distribution_all.png").stat().st_size > 0
        meta = report["metadata"]
        assert meta["config"]["master_seed"] == 77
        assert "seed_derivation" in meta
        for result in report["results"]:
            assert not any(k.startswith("_") for k in result)

    def test_deterministic_outputs(self, tmp_path):
        config = config_from_dict(base_raw())
        run_experiment(config, tmp_path / "a")
        run_experiment(config, tmp_path / "b")
        for path in sorted((tmp_path / "a").iterdir()):
            twin = tmp_path / "b" / path.name
            if path.name == "report.json":
                first = json.loads(path.read_text())
                second = json.loads(twin.read_text())
                first["metadata"].pop("generated_at")
                second["metadata"].pop("generated_at")
                assert first == second
            else:
                assert path.read_bytes() == twin.read_bytes()

    def test_csv_format(self, tmp_path):
        config = config_from_dict(base_raw())
        run_experiment(config, tmp_path)
        runs = (tmp_path / "runs_fuzzy_eta0.6.csv").read_bytes()
        assert b"\r" not in runs
        lines = runs.decode().strip().split("\n")
        assert lines[0] == (
            "run_index,seed,fidelity,loss,z,iterations,converged,"
            "log_likelihood,residual"
        )
        assert len(lines) == 7
        fidelity = lines[1].split(",")[2]
        assert 0.0 < float(fidelity) <= 1.0
        z_lines = (tmp_path / "z_theory_fuzzy_eta0.6.csv").read_text().split("\n")
        assert z_lines[0] == "z"

    def test_histogram_csv_edges(self, tmp_path):
        config = config_from_dict(base_raw(num_experiments=0))
        run_experiment(config, tmp_path)
        rows = (
            (tmp_path / "z_histogram_fuzzy_eta0.6.csv").read_text().strip().split("\n")
        )
        assert rows[0] == "bin_left,bin_right,theoretical_density"
        left = [float(r.split(",")[0]) for r in rows[1:]]
        right = [float(r.split(",")[1]) for r in rows[1:]]
        assert left[0] == 0.0
        np.testing.assert_allclose(np.subtract(right, left), Z_BIN_WIDTH)

    def test_seed_override_changes_samples(self, tmp_path):
        import dataclasses

        config = config_from_dict(base_raw())
        other = dataclasses.replace(config, master_seed=78)
        first = run_pair(config, ProtocolVariant.FUZZY, 0.6)
        second = run_pair(other, ProtocolVariant.FUZZY, 0.6)
        assert first["_runs"] != second["_runs"]


class TestExperimentConfigDefaults:
    def test_optional_fields(self):
        config = config_from_dict(base_raw())
        assert config.m1_set == "octahedron8"
        assert config.workers == 1
        assert config.chi2_bins == 10
        assert config.z_export_limit == 20_000
        assert isinstance(config.solver, SolverOptions)
        assert isinstance(config, ExperimentConfig)
