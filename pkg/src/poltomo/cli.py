"""Command-line front end.

Subcommands: ``protocol``, ``simulate``, ``reconstruct``, ``info``,
``experiment``.  Exit codes: 0 on success, 1 on validation errors, 2 on
numerical failures (non-convergence or informational incompleteness).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiment import (
    ExperimentConfig,
    NumericalFailure,
    derive_seed,
    load_config,
    pair_tag,
    run_experiment,
    write_z_samples_csv,
)
from .information import (
    InformationallyIncompleteError,
    analysis_to_dict,
    analyze_protocol,
    closed_form_information,
    sample_loss_distribution,
)
from .protocols import (
    NAMED_SETS,
    build_protocol,
    load_protocol,
    protocol_fingerprint,
    save_protocol,
    verify_unity_decomposition,
)
from .reconstruction import ml_reconstruct, result_to_dict
from .simulation import load_counts, sample_counts, save_counts


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poltomo",
        description="multi-photon polarization tomography: protocols, simulation, "
        "reconstruction, and accuracy analysis",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed override")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--workers", type=int, help="concurrent experiment runs")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("protocol", parents=[common],
                       help="build and serialize the configured protocols")

    p = sub.add_parser("simulate", parents=[common],
                       help="draw a Poisson counts record for a protocol")
    p.add_argument("--protocol", type=Path, required=True, help="protocol file")

    p = sub.add_parser("reconstruct", parents=[common],
                       help="maximum-likelihood state estimate from a counts record")
    p.add_argument("--protocol", type=Path, required=True, help="protocol file")
    p.add_argument("--counts", type=Path, required=True, help="counts file")
    p.add_argument("--ignore-fingerprint", action="store_true",
                   help="reconstruct even if the counts fingerprint differs")

    p = sub.add_parser("info", parents=[common],
                       help="information-matrix accuracy analysis of a protocol")
    p.add_argument("--protocol", type=Path, required=True, help="protocol file")
    p.add_argument("--z-samples", type=int, default=0,
                   help="also export this many theoretical z samples as CSV")

    p = sub.add_parser("experiment", parents=[common],
                       help="full Monte Carlo comparison run from a config")
    return parser


def _require_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is None:
        raise ValueError("this command needs --config")
    return load_config(args.config)


def _out_dir(args: argparse.Namespace, config: ExperimentConfig | None = None) -> Path:
    if args.out is not None:
        out = Path(args.out)
    elif config is not None and config.output_dir:
        out = Path(config.output_dir)
    else:
        out = Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_protocol(args: argparse.Namespace) -> int:
    config = _require_config(args)
    out = _out_dir(args, config)
    projector_set = NAMED_SETS[config.m1_set]()
    for variant in config.variants:
        for eta in config.etas:
            protocol = build_protocol(
                variant, projector_set, config.state.num_photons, config.sample_size, eta
            )
            tag = pair_tag(variant, eta)
            path = out / f"protocol_{tag}.json"
            save_protocol(protocol, path)
            residual = verify_unity_decomposition(protocol)
            print(f"{path}: {protocol.num_elements} elements, "
                  f"unity-decomposition residual {residual:.3e}")
            zero_exposure = int(sum(1 for e in protocol.elements if e.exposure == 0.0))
            if zero_exposure:
                print(f"warning: {zero_exposure} elements have zero exposure",
                      file=sys.stderr)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _require_config(args)
    protocol = load_protocol(args.protocol)
    if protocol.dim != config.state.dim:
        raise ValueError(
            f"protocol dimension {protocol.dim} does not match config state "
            f"dimension {config.state.dim}"
        )
    seed = args.seed if args.seed is not None else config.master_seed
    record = sample_counts(protocol, config.state, seed)
    out = _out_dir(args, config)
    path = out / f"counts_seed{seed}.json"
    save_counts(record, path)
    print(f"{path}: {record.total} events over {record.counts.size} elements")
    return 0


def _cmd_reconstruct(args: argparse.Namespace) -> int:
    protocol = load_protocol(args.protocol)
    record = load_counts(args.counts)
    if record.counts.size != protocol.num_elements:
        raise ValueError(
            f"counts file has {record.counts.size} entries but the protocol "
            f"has {protocol.num_elements} elements"
        )
    solver = None
    reference = None
    if args.config is not None:
        config = load_config(args.config)
        solver = config.solver
        if config.state.dim == protocol.dim:
            # The config state doubles as fidelity reference and warm start;
            # the estimate itself is still the likelihood maximizer.
            reference = config.state
    result = ml_reconstruct(
        protocol,
        record,
        solver,
        reference=reference,
        init=reference,
        allow_fingerprint_mismatch=args.ignore_fingerprint,
    )
    out = _out_dir(args)
    path = out / f"reconstruction_{Path(args.counts).stem}.json"
    with open(path, "w", newline="\n") as fh:
        json.dump(result_to_dict(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{path}: converged={result.converged} iterations={result.iterations} "
          f"residual={result.residual:.3e}")
    return 0 if result.converged else 2


def _cmd_info(args: argparse.Namespace) -> int:
    config = _require_config(args)
    protocol = load_protocol(args.protocol)
    if protocol.dim != config.state.dim:
        raise ValueError(
            f"protocol dimension {protocol.dim} does not match config state "
            f"dimension {config.state.dim}"
        )
    analysis = analyze_protocol(protocol, config.state)
    closed_form = closed_form_information(
        protocol.variant, protocol.num_photons, protocol.efficiency
    )
    data = analysis_to_dict(analysis)
    data["closed_form_information"] = closed_form
    data["closed_form_deviation"] = abs(analysis.normalized_information - closed_form)
    data["variant"] = protocol.variant.value
    data["eta"] = protocol.efficiency
    data["fingerprint"] = protocol_fingerprint(protocol)
    out = _out_dir(args, config)
    tag = pair_tag(protocol.variant, protocol.efficiency)
    path = out / f"information_{tag}.json"
    with open(path, "w", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{path}: h = {analysis.normalized_information:.12g} "
          f"(closed form {closed_form:.12g}), mean loss {analysis.mean_loss:.6g}")
    if args.z_samples > 0:
        seed = args.seed if args.seed is not None else derive_seed(
            config.master_seed, "theory", protocol.variant.value, protocol.efficiency
        )
        z = sample_loss_distribution(analysis.loss_coefficients, args.z_samples, seed)
        z_path = out / f"z_theory_{tag}.csv"
        write_z_samples_csv(z_path, z)
        print(f"{z_path}: {args.z_samples} theoretical z samples")
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    config = _require_config(args)
    if args.seed is not None:
        import dataclasses

        config = dataclasses.replace(config, master_seed=args.seed)
    out = _out_dir(args, config)
    workers = args.workers if args.workers is not None else None
    report = run_experiment(config, out, workers=workers)
    for result in report["results"]:
        line = (f"{result['variant']} eta={result['eta']:g}: "
                f"theory <1-F> = {result['theory']['mean_loss']:.6g}")
        empirical = result.get("empirical")
        if empirical:
            line += (f", empirical <1-F> = {empirical['mean_loss']:.6g}"
                     f" +- {empirical['std_error']:.2g}")
            if empirical["chi_squared"]:
                line += f", chi2 p = {empirical['chi_squared']['p_value']:.4g}"
        print(line)
    print(f"report written to {out / 'report.json'}")
    return 0


_COMMANDS = {
    "protocol": _cmd_protocol,
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "info": _cmd_info,
    "experiment": _cmd_experiment,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; exit 2 is reserved for numerical
        # failures here, so usage problems map to the validation code
        return 0 if exc.code == 0 else 1
    if args.seed is not None and not (0 <= args.seed < 2**64):
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (InformationallyIncompleteError, NumericalFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
