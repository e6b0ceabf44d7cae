"""Batch experiment harness: config parsing, Monte Carlo runs, reports.

A single JSON config drives everything.  Physical quantities (state, n,
eta, variants) must be explicit; solver and output settings have
defaults.  For every (variant, eta) pair the harness computes the
information-matrix accuracy theory, optionally runs ``num_experiments``
independent simulate-reconstruct cycles, compares the two with a
chi-squared test, and writes a machine-readable report plus plot-ready
CSV files and rendered figures.

Seeds are derived, stably across runs and versions, as the first eight
little-endian bytes of SHA-256 over
``"poltomo-seed-v1|<master_seed>|<purpose>|<variant>|<repr(eta)>|<index>"``
with purpose ``counts`` and ``init`` per run index, and ``theory``
(without index) for the reference fluctuation sample.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .information import (
    analyze_protocol,
    chi_squared_gof,
    closed_form_information,
    sample_loss_distribution,
)
from .protocols import (
    NAMED_SETS,
    Protocol,
    ProtocolVariant,
    build_protocol,
    protocol_fingerprint,
    verify_unity_decomposition,
)
from .quantum import PureState, ghz_state
from .reconstruction import SolverOptions, ml_reconstruct
from .simulation import sample_counts

Z_BIN_WIDTH = 0.1


class NumericalFailure(RuntimeError):
    """Too many reconstructions failed to converge."""


def derive_seed(master_seed: int, *parts: object) -> int:
    """Stable 64-bit seed from a master seed and a tag sequence.

    Floats are keyed by their repr, so distinct eta values never collide.
    """
    text = "poltomo-seed-v1|" + "|".join(
        [str(int(master_seed))] + [repr(p) if isinstance(p, float) else str(p) for p in parts]
    )
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class ExperimentConfig:
    state: PureState
    variants: tuple[ProtocolVariant, ...]
    sample_size: float
    etas: tuple[float, ...]
    num_experiments: int
    master_seed: int
    solver: SolverOptions
    m1_set: str = "octahedron8"
    output_dir: str | None = None
    workers: int = 1
    theory_samples: int = 1_000_000
    chi2_bins: int = 10
    z_export_limit: int = 20_000


def _parse_state(raw: object) -> PureState:
    if not isinstance(raw, dict):
        raise ValueError('config "state" must be {"ghz": N} or {"amplitudes": [[re, im], ...]}')
    if "ghz" in raw:
        return ghz_state(int(raw["ghz"]))
    if "amplitudes" in raw:
        pairs = np.asarray(raw["amplitudes"], dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError('config "amplitudes" must be a list of [re, im] pairs')
        amps = pairs[:, 0] + 1j * pairs[:, 1]
        norm = float(np.linalg.norm(amps))
        if abs(norm * norm - 1.0) > 1e-6:
            raise ValueError(f"explicit amplitudes are not normalized: |psi|^2 = {norm * norm!r}")
        return PureState.from_amplitudes(amps / norm)
    raise ValueError('config "state" must contain either "ghz" or "amplitudes"')


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    for key in ("state", "variants", "n", "eta", "num_experiments", "master_seed"):
        if key not in raw:
            raise ValueError(f'config is missing required field "{key}"')
    state = _parse_state(raw["state"])
    try:
        variants = tuple(ProtocolVariant(v) for v in raw["variants"])
    except ValueError as exc:
        raise ValueError(f"unknown protocol variant: {exc}") from None
    if not variants:
        raise ValueError('config "variants" must not be empty')
    n = float(raw["n"])
    if not (n > 0 and np.isfinite(n)):
        raise ValueError(f'config "n" must be positive, got {raw["n"]}')
    etas_raw = raw["eta"] if isinstance(raw["eta"], list) else [raw["eta"]]
    etas = tuple(float(e) for e in etas_raw)
    if not etas or any(not (0.0 < e <= 1.0) for e in etas):
        raise ValueError('config "eta" entries must lie in (0, 1]')
    num_experiments = int(raw["num_experiments"])
    if num_experiments < 0:
        raise ValueError('config "num_experiments" must be >= 0')
    master_seed = int(raw["master_seed"])
    if not (0 <= master_seed < 2**64):
        raise ValueError('config "master_seed" must be an unsigned 64-bit integer')
    m1_set = str(raw.get("m1_set", "octahedron8"))
    if m1_set not in NAMED_SETS:
        raise ValueError(f'unknown m1_set "{m1_set}"; available: {sorted(NAMED_SETS)}')
    try:
        solver = SolverOptions(**raw.get("solver", {}))
    except TypeError as exc:
        raise ValueError(f"bad solver options: {exc}") from None
    workers = int(raw.get("workers", 1))
    if workers < 1:
        raise ValueError('config "workers" must be >= 1')
    theory_samples = int(raw.get("theory_samples", 1_000_000))
    if theory_samples < 1:
        raise ValueError('config "theory_samples" must be >= 1')
    chi2_bins = int(raw.get("chi2_bins", 10))
    if chi2_bins < 2:
        raise ValueError('config "chi2_bins" must be >= 2')
    return ExperimentConfig(
        state=state,
        variants=variants,
        sample_size=n,
        etas=etas,
        num_experiments=num_experiments,
        master_seed=master_seed,
        solver=solver,
        m1_set=m1_set,
        output_dir=raw.get("output_dir"),
        workers=workers,
        theory_samples=theory_samples,
        chi2_bins=chi2_bins,
        z_export_limit=int(raw.get("z_export_limit", 20_000)),
    )


def config_echo(config: ExperimentConfig) -> dict:
    """Config as written to report metadata."""
    return {
        "state": {
            "num_photons": config.state.num_photons,
            "amplitudes": [[a.real, a.imag] for a in config.state.amplitudes],
        },
        "variants": [v.value for v in config.variants],
        "m1_set": config.m1_set,
        "n": config.sample_size,
        "eta": list(config.etas),
        "num_experiments": config.num_experiments,
        "master_seed": config.master_seed,
        "solver": dataclasses.asdict(config.solver),
        "theory_samples": config.theory_samples,
        "chi2_bins": config.chi2_bins,
    }


def pair_tag(variant: ProtocolVariant, eta: float) -> str:
    return f"{variant.value}_eta{eta:g}"


# --- per-run worker --------------------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(protocol: Protocol, psi: PureState, solver: SolverOptions) -> None:
    _WORKER_STATE["protocol"] = protocol
    _WORKER_STATE["psi"] = psi
    _WORKER_STATE["solver"] = solver


def _run_single(seeds: tuple[int, int, int]) -> dict:
    run_index, counts_seed, init_seed = seeds
    protocol: Protocol = _WORKER_STATE["protocol"]
    psi: PureState = _WORKER_STATE["psi"]
    solver: SolverOptions = _WORKER_STATE["solver"]
    record = sample_counts(protocol, psi, counts_seed)
    result = ml_reconstruct(
        protocol,
        record,
        dataclasses.replace(solver, init_seed=init_seed),
        reference=psi,
    )
    return {
        "run_index": run_index,
        "seed": counts_seed,
        "fidelity": result.fidelity_vs_reference,
        "iterations": result.iterations,
        "converged": result.converged,
        "log_likelihood": result.log_likelihood,
        "residual": result.residual,
    }


def _run_all(
    protocol: Protocol,
    psi: PureState,
    solver: SolverOptions,
    seeds: list[tuple[int, int, int]],
    workers: int,
) -> list[dict]:
    if workers <= 1 or len(seeds) <= 1:
        _init_worker(protocol, psi, solver)
        return [_run_single(s) for s in seeds]
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_init_worker, initargs=(protocol, psi, solver)
    ) as pool:
        return list(pool.map(_run_single, seeds, chunksize=8))


# --- CSV output ------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.15g}"


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    """Delimited output: header row, LF endings, floats at 15 significant digits."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) if isinstance(x, float) else str(x) for x in row) + "\n")


def write_z_samples_csv(path: Path, z_values: np.ndarray) -> None:
    write_csv(path, ["z"], [[float(z)] for z in z_values])


def z_histogram_edges(z_values: np.ndarray) -> np.ndarray:
    """Fixed-width 0.1 bins from 0 to beyond the largest observed z."""
    top = float(np.max(z_values)) + 0.5 if z_values.size else 0.5
    num = int(np.ceil(top / Z_BIN_WIDTH))
    return np.round(np.arange(num + 1) * Z_BIN_WIDTH, 10)


# --- the experiment itself -------------------------------------------------


def run_pair(
    config: ExperimentConfig, variant: ProtocolVariant, eta: float, workers: int = 1
) -> dict:
    """Theory and Monte Carlo for one (variant, eta) pair.

    Returns a result dict with raw run rows and z samples still attached
    (keys starting with an underscore are stripped before report output).
    """
    psi = config.state
    projector_set = NAMED_SETS[config.m1_set]()
    protocol = build_protocol(
        variant, projector_set, psi.num_photons, config.sample_size, eta
    )
    analysis = analyze_protocol(protocol, psi)
    theory_seed = derive_seed(config.master_seed, "theory", variant.value, eta)
    z_theory = sample_loss_distribution(
        analysis.loss_coefficients, config.theory_samples, theory_seed
    )
    result: dict = {
        "variant": variant.value,
        "eta": eta,
        "protocol": {
            "num_elements": protocol.num_elements,
            "unity_residual": verify_unity_decomposition(protocol),
            "fingerprint": protocol_fingerprint(protocol),
        },
        "theory": {
            "mean_loss": analysis.mean_loss,
            "normalized_information": analysis.normalized_information,
            "closed_form_information": closed_form_information(
                variant, psi.num_photons, eta
            ),
            "spectrum": [float(x) for x in analysis.spectrum],
            "loss_coefficients": [float(x) for x in analysis.loss_coefficients],
        },
        "_z_theory": z_theory,
    }

    if config.num_experiments == 0:
        return result

    seeds = [
        (
            i,
            derive_seed(config.master_seed, "counts", variant.value, eta, i),
            derive_seed(config.master_seed, "init", variant.value, eta, i),
        )
        for i in range(config.num_experiments)
    ]
    runs = _run_all(protocol, psi, config.solver, seeds, workers)
    runs.sort(key=lambda r: r["run_index"])

    non_converged = sum(1 for r in runs if not r["converged"])
    if non_converged > 0.05 * len(runs):
        raise NumericalFailure(
            f"{non_converged} of {len(runs)} reconstructions did not converge "
            f"for {pair_tag(variant, eta)} (threshold 5%)"
        )

    losses = np.array([1.0 - r["fidelity"] for r in runs])
    z_empirical = -np.log10(np.maximum(losses, np.finfo(float).tiny))
    empirical: dict = {
        "num_experiments": len(runs),
        "mean_loss": float(losses.mean()),
        "std_error": (
            float(losses.std(ddof=1) / np.sqrt(len(losses))) if len(losses) > 1 else None
        ),
        "non_converged": non_converged,
    }
    if len(runs) >= 5 * config.chi2_bins:
        gof = chi_squared_gof(z_empirical, z_theory, config.chi2_bins)
        empirical["chi_squared"] = {
            "statistic": gof.statistic,
            "degrees_of_freedom": gof.degrees_of_freedom,
            "p_value": gof.p_value,
        }
    else:
        empirical["chi_squared"] = None
    result["empirical"] = empirical
    result["_z_empirical"] = z_empirical
    result["_runs"] = runs
    return result


def _histogram_block(result: dict) -> dict:
    z_theory = result["_z_theory"]
    z_empirical = result.get("_z_empirical")
    combined = (
        np.concatenate([z_theory, z_empirical]) if z_empirical is not None else z_theory
    )
    edges = z_histogram_edges(combined)
    theory_density, _ = np.histogram(z_theory, bins=edges, density=True)
    block = {
        "bin_edges": [float(e) for e in edges],
        "theoretical_density": [float(x) for x in theory_density],
    }
    if z_empirical is not None:
        counts, _ = np.histogram(z_empirical, bins=edges)
        block["empirical_counts"] = [int(c) for c in counts]
    return block


def _write_pair_outputs(result: dict, out_dir: Path, z_export_limit: int) -> dict:
    from . import plots  # deferred: pulls in matplotlib

    tag = pair_tag(ProtocolVariant(result["variant"]), result["eta"])
    files = {}

    hist = _histogram_block(result)
    result["histogram"] = hist
    edges = hist["bin_edges"]
    if "empirical_counts" in hist:
        header = ["bin_left", "bin_right", "theoretical_density", "empirical_count"]
        rows = [
            [edges[i], edges[i + 1], hist["theoretical_density"][i], hist["empirical_counts"][i]]
            for i in range(len(edges) - 1)
        ]
    else:
        header = ["bin_left", "bin_right", "theoretical_density"]
        rows = [
            [edges[i], edges[i + 1], hist["theoretical_density"][i]]
            for i in range(len(edges) - 1)
        ]
    path = out_dir / f"z_histogram_{tag}.csv"
    write_csv(path, header, rows)
    files["histogram_csv"] = path.name

    path = out_dir / f"z_theory_{tag}.csv"
    write_z_samples_csv(path, result["_z_theory"][:z_export_limit])
    files["z_theory_csv"] = path.name

    if "_runs" in result:
        path = out_dir / f"runs_{tag}.csv"
        write_csv(
            path,
            ["run_index", "seed", "fidelity", "loss", "z", "iterations", "converged",
             "log_likelihood", "residual"],
            [
                [
                    r["run_index"], r["seed"], r["fidelity"], 1.0 - r["fidelity"],
                    float(z), r["iterations"], int(r["converged"]),
                    r["log_likelihood"], r["residual"],
                ]
                for r, z in zip(result["_runs"], result["_z_empirical"])
            ],
        )
        files["runs_csv"] = path.name

        path = out_dir / f"z_empirical_{tag}.csv"
        write_z_samples_csv(path, result["_z_empirical"])
        files["z_empirical_csv"] = path.name

    path = out_dir / f"z_distribution_{tag}.png"
    plots.plot_z_distribution(
        edges=np.asarray(edges),
        theoretical_density=np.asarray(hist["theoretical_density"]),
        empirical_counts=(
            np.asarray(hist["empirical_counts"]) if "empirical_counts" in hist else None
        ),
        title=f"{result['variant']} protocol, eta = {result['eta']:g}",
        out_path=path,
    )
    files["figure"] = path.name
    return files


def run_experiment(
    config: ExperimentConfig, out_dir: str | Path, workers: int | None = None
) -> dict:
    """Run every (variant, eta) pair and write the report and its artifacts.

    Returns the report dict; identical config and master seed produce
    byte-identical output files apart from the ``generated_at`` metadata
    field.
    """
    from . import plots

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = config.workers if workers is None else workers

    results = []
    for variant in config.variants:
        for eta in config.etas:
            result = run_pair(config, variant, eta, workers=workers)
            result["files"] = _write_pair_outputs(result, out, config.z_export_limit)
            results.append(result)

    overview_path = out / "z_distribution_all.png"
    plots.plot_z_overview(
        [
            (
                f"{r['variant']} eta={r['eta']:g}",
                np.asarray(r["histogram"]["bin_edges"]),
                np.asarray(r["histogram"]["theoretical_density"]),
            )
            for r in results
        ],
        overview_path,
    )

    import numpy as _np
    import scipy as _sp

    report = {
        "metadata": {
            "generated_at": datetime.now(timezone.utc).isoformat(),
            "config": config_echo(config),
            "seed_derivation": (
                "sha256 little-endian first 8 bytes of "
                "'poltomo-seed-v1|<master_seed>|<purpose>|<variant>|<repr(eta)>|<run>'"
            ),
            "versions": {
                "poltomo": __version__,
                "numpy": _np.__version__,
                "scipy": _sp.__version__,
            },
        },
        "results": [
            {k: v for k, v in r.items() if not k.startswith("_")} for r in results
        ],
    }
    report_path = out / "report.json"
    with open(report_path, "w", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report
