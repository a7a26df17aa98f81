"""Command-line pipeline: registration, morph generation, score evaluation.

Subcommands:

- ``register``: align one cloud to another, write the transform, the
  displacement field, and the aligned colored source.
- ``morph``: run a single pair end to end and save the blended cloud.
- ``pipeline``: batch-generate morphs from a pairing list, with a manifest.
- ``eval``: compute thresholds and the attack-potential report from score
  tables.
- ``quadrants``: export the per-record quadrant scatter only.

A flat ``key=value`` config file can preload any flag; explicit flags win.
Every run is deterministic given its inputs, flags, and seed.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from .bcpd import RegistrationParams, RegistrationResult, register
from .cloudio import PointCloud, denormalize, downsample, load_ply, save_ply
from .errors import CloudMorphError
from .metrics import (
    FtarTable,
    build_report,
    read_ftar_csv,
    read_nonmated_csv,
    read_scores_csv,
    threshold_at_fmr,
    write_report_csv,
    write_scatter_csv,
)
from .morpher import MorphConfig, aligned_colored_source, correspondence_targets, morph

_DEFAULTS = RegistrationParams()

# config key -> (argparse dest, parser)
_CONFIG_KEYS = {
    "beta": ("beta", float),
    "lambda": ("lam", float),
    "omega": ("omega", float),
    "gamma": ("gamma", float),
    "kappa": ("kappa", float),
    "tol": ("tol", float),
    "max_iters": ("max_iters", int),
    "alpha": ("alpha", float),
    "downsample": ("downsample", int),
    "seed": ("seed", int),
    "fmr": ("fmr", float),
    "sigma_correction": ("sigma_correction", None),  # parsed as bool below
    "out": ("out", str),
}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE_WORDS:
        return True
    if lowered in _FALSE_WORDS:
        return False
    raise ValueError(f"cannot parse boolean from {text!r}")


def load_config(path) -> dict:
    """Parse a flat key=value file into argparse defaults.

    Blank lines and lines starting with '#' are ignored; unknown keys are
    an error so typos fail loudly.
    """
    defaults = {}
    for line_num, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}: line {line_num}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}: line {line_num}: unknown config key {key!r}")
        dest, caster = _CONFIG_KEYS[key]
        defaults[dest] = _parse_bool(value) if caster is None else caster(value)
    return defaults


def _add_registration_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--beta", type=float, default=_DEFAULTS.beta,
                        help="Gaussian kernel bandwidth (normalized units)")
    parser.add_argument("--lambda", dest="lam", type=float, default=_DEFAULTS.lam,
                        help="displacement stiffness weight")
    parser.add_argument("--omega", type=float, default=_DEFAULTS.omega,
                        help="outlier probability in [0, 1)")
    parser.add_argument("--gamma", type=float, default=_DEFAULTS.gamma,
                        help="initial residual-variance scale")
    parser.add_argument("--kappa", type=float, default=_DEFAULTS.kappa,
                        help="mixing-weight concentration; inf keeps weights uniform")
    parser.add_argument("--tol", type=float, default=_DEFAULTS.tol,
                        help="relative variance change that declares convergence")
    parser.add_argument("--max-iters", dest="max_iters", type=int, default=_DEFAULTS.max_iters,
                        help="iteration cap")
    parser.add_argument("--sigma-correction", dest="sigma_correction", action="store_true",
                        default=False,
                        help="include the posterior-covariance correction term")
    parser.add_argument("--downsample", type=int, default=2000,
                        help="random subsample size per cloud; 0 keeps all points")
    parser.add_argument("--seed", type=int, default=0, help="base random seed")


def _add_out_and_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", type=str, default="out", help="output directory")
    parser.add_argument("--config", type=str, default=None,
                        help="key=value config file; explicit flags override it")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="cloudmorph",
        description="Colored point-cloud registration, morphing, and attack metrics.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    formatter = argparse.ArgumentDefaultsHelpFormatter
    by_name = {}

    p_register = subparsers.add_parser(
        "register", formatter_class=formatter,
        help="align a source cloud to a target cloud")
    p_register.add_argument("source", help="source PLY file")
    p_register.add_argument("target", help="target PLY file")
    _add_registration_flags(p_register)
    _add_out_and_config(p_register)
    by_name["register"] = p_register

    p_morph = subparsers.add_parser(
        "morph", formatter_class=formatter,
        help="register one pair and save the blended morph")
    p_morph.add_argument("source", help="source PLY file")
    p_morph.add_argument("target", help="target PLY file")
    p_morph.add_argument("--alpha", type=float, default=0.5,
                         help="source blend weight in [0, 1]")
    _add_registration_flags(p_morph)
    _add_out_and_config(p_morph)
    by_name["morph"] = p_morph

    p_pipeline = subparsers.add_parser(
        "pipeline", formatter_class=formatter,
        help="batch-generate morphs from a pairing list")
    p_pipeline.add_argument("pairs", help="CSV pairing list: subject_a,subject_b,morph_id[,alpha]")
    p_pipeline.add_argument("--alpha", type=float, default=0.5,
                            help="source blend weight, unless a pair overrides it")
    _add_registration_flags(p_pipeline)
    _add_out_and_config(p_pipeline)
    by_name["pipeline"] = p_pipeline

    p_eval = subparsers.add_parser(
        "eval", formatter_class=formatter,
        help="compute thresholds and the attack-potential report")
    p_eval.add_argument("scores", help="score CSV: morph_id,morph_type,frs_id,attempt,score_s1,score_s2")
    p_eval.add_argument("nonmated", help="non-mated score CSV: frs_id,score")
    p_eval.add_argument("--ftar", type=str, default=None,
                        help="failure-to-acquire CSV: frs_id,attempt,ftar (default: all zero)")
    p_eval.add_argument("--fmr", type=float, default=0.001,
                        help="false-match-rate target for thresholds")
    _add_out_and_config(p_eval)
    by_name["eval"] = p_eval

    p_quadrants = subparsers.add_parser(
        "quadrants", formatter_class=formatter,
        help="export the per-record quadrant scatter")
    p_quadrants.add_argument("scores", help="score CSV")
    p_quadrants.add_argument("nonmated", help="non-mated score CSV")
    p_quadrants.add_argument("--fmr", type=float, default=0.001,
                             help="false-match-rate target for thresholds")
    _add_out_and_config(p_quadrants)
    by_name["quadrants"] = p_quadrants

    return parser, by_name


def _params_from_args(args: argparse.Namespace) -> RegistrationParams:
    return RegistrationParams(
        beta=args.beta,
        lam=args.lam,
        omega=args.omega,
        gamma=args.gamma,
        kappa=args.kappa,
        tol=args.tol,
        max_iters=args.max_iters,
        use_sigma_correction=args.sigma_correction,
    )


def _load_input_cloud(path: str, downsample_to: int, seed: int) -> PointCloud:
    cloud = load_ply(path)
    if downsample_to > 0:
        cloud = downsample(cloud, downsample_to, seed)
    return cloud


def _write_transform_csv(result: RegistrationResult, path: Path) -> None:
    rot = result.transform.rotation
    trans = result.transform.translation
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["s", "r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33",
             "t1", "t2", "t3"]
        )
        writer.writerow(
            [repr(float(result.transform.scale))]
            + [repr(float(v)) for v in rot.reshape(-1)]
            + [repr(float(v)) for v in trans]
        )


def _write_displacements_csv(result: RegistrationResult, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["vx", "vy", "vz"])
        for row in result.displacement.tolist():
            writer.writerow([repr(float(v)) for v in row])


def _write_normalization_csv(result: RegistrationResult, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["cloud", "cx", "cy", "cz", "scale"])
        for name, record in (("source", result.source_record), ("target", result.target_record)):
            writer.writerow(
                [name]
                + [repr(float(v)) for v in record.centroid]
                + [repr(float(record.scale))]
            )


def cmd_register(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = _params_from_args(args)
    source = _load_input_cloud(args.source, args.downsample, args.seed)
    target = _load_input_cloud(args.target, args.downsample, args.seed)
    result = register(source, target, params)
    _write_transform_csv(result, out / "transform.csv")
    _write_displacements_csv(result, out / "displacements.csv")
    _write_normalization_csv(result, out / "normalization.csv")
    save_ply(result.aligned_source(), out / "aligned_source.ply")
    status = "converged" if result.converged else "did not converge"
    print(f"registration {status} after {result.iterations} iterations "
          f"(residual variance {result.state.sigma2:.3e})")
    return 0 if result.converged else 2


def _run_pair(
    source_path: str,
    target_path: str,
    alpha: float,
    params: RegistrationParams,
    downsample_to: int,
    seed: int,
) -> tuple[PointCloud, RegistrationResult]:
    """Full chain for one pair; returns the morph in original target units."""
    source = _load_input_cloud(source_path, downsample_to, seed)
    target = _load_input_cloud(target_path, downsample_to, seed)
    result = register(source, target, params)
    aligned = aligned_colored_source(
        result.source_normalized, result.transform, result.displacement
    )
    coords, colors = correspondence_targets(result.state, result.target_normalized)
    blended = morph(aligned, coords, colors, MorphConfig(alpha), target_id=target.id)
    return denormalize(blended, result.target_record), result


def cmd_morph(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = _params_from_args(args)
    blended, result = _run_pair(
        args.source, args.target, args.alpha, params, args.downsample, args.seed
    )
    target_file = out / f"{blended.id}.ply"
    save_ply(blended, target_file)
    status = "converged" if result.converged else "did not converge"
    print(f"{target_file} ({status} after {result.iterations} iterations)")
    return 0 if result.converged else 2


def _read_pairing_csv(path) -> list[dict]:
    path = Path(path)
    pairs = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        have = reader.fieldnames or []
        for column in ("subject_a", "subject_b", "morph_id"):
            if column not in have:
                raise ValueError(f"{path}: missing column {column!r}; found {have}")
        for row_num, row in enumerate(reader, start=2):
            if not all(row.get(c) for c in ("subject_a", "subject_b", "morph_id")):
                raise ValueError(f"{path}: row {row_num}: incomplete pairing row")
            alpha_text = (row.get("alpha") or "").strip()
            try:
                alpha = float(alpha_text) if alpha_text else None
            except ValueError as exc:
                raise ValueError(f"{path}: row {row_num}: bad alpha {alpha_text!r}") from exc
            pairs.append(
                {
                    "subject_a": row["subject_a"],
                    "subject_b": row["subject_b"],
                    "morph_id": row["morph_id"],
                    "alpha": alpha,
                }
            )
    morph_ids = [p["morph_id"] for p in pairs]
    duplicates = sorted({m for m in morph_ids if morph_ids.count(m) > 1})
    if duplicates:
        raise ValueError(f"{path}: duplicate morph_id values {duplicates}")
    return pairs


def cmd_pipeline(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = _params_from_args(args)
    pairs = _read_pairing_csv(args.pairs)
    manifest_rows = []
    for index, pair in enumerate(pairs):
        alpha = pair["alpha"] if pair["alpha"] is not None else args.alpha
        row = {
            "morph_id": pair["morph_id"],
            "subject_a": pair["subject_a"],
            "subject_b": pair["subject_b"],
            "alpha": repr(float(alpha)),
            "status": "",
            "iterations": "",
            "detail": "",
        }
        if pair["subject_a"] == pair["subject_b"]:
            row["status"] = "invalid"
            row["detail"] = "subject paths are identical"
            manifest_rows.append(row)
            continue
        try:
            blended, result = _run_pair(
                pair["subject_a"], pair["subject_b"], alpha, params,
                args.downsample, args.seed + index,
            )
            save_ply(blended, out / f"{pair['morph_id']}.ply")
            row["status"] = "converged" if result.converged else "not_converged"
            row["iterations"] = str(result.iterations)
        except (CloudMorphError, OSError, ValueError) as exc:
            row["status"] = "error"
            row["detail"] = str(exc)
        manifest_rows.append(row)
    with (out / "manifest.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(
            handle,
            fieldnames=["morph_id", "subject_a", "subject_b", "alpha", "status",
                        "iterations", "detail"],
        )
        writer.writeheader()
        writer.writerows(manifest_rows)
    done = sum(1 for r in manifest_rows if r["status"] in ("converged", "not_converged"))
    print(f"generated {done}/{len(pairs)} morphs into {out}")
    return 0


def _thresholds_from_nonmated(records, nonmated, fmr: float):
    thresholds = []
    for frs_id in sorted({r.frs_id for r in records}):
        if frs_id not in nonmated:
            raise ValueError(f"no non-mated scores for frs_id {frs_id!r}")
        thresholds.append(threshold_at_fmr(nonmated[frs_id], fmr, frs_id=frs_id))
    return thresholds


def cmd_eval(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = read_scores_csv(args.scores)
    nonmated = read_nonmated_csv(args.nonmated)
    ftar = read_ftar_csv(args.ftar) if args.ftar else FtarTable()
    thresholds = _thresholds_from_nonmated(records, nonmated, args.fmr)
    report = build_report(records, thresholds, ftar)
    write_report_csv(report, out / "report.csv")
    write_scatter_csv(records, thresholds, out / "quadrants.csv")
    for threshold in thresholds:
        flag = " (saturated)" if threshold.saturated else ""
        print(f"{threshold.frs_id} tau {threshold.tau!r}{flag}")
    for frs_id in sorted(report.per_frs):
        print(f"{frs_id} G-MAP-MA {report.per_frs[frs_id]:.4f}")
    print(f"G-MAP-MAMF {report.cross_frs:.4f}")
    return 0


def cmd_quadrants(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = read_scores_csv(args.scores)
    nonmated = read_nonmated_csv(args.nonmated)
    thresholds = _thresholds_from_nonmated(records, nonmated, args.fmr)
    write_scatter_csv(records, thresholds, out / "quadrants.csv")
    report = build_report(records, thresholds, FtarTable())
    for frs_id in sorted(report.quadrant_counts):
        counts = report.quadrant_counts[frs_id]
        print(f"{frs_id} I={counts['I']} II={counts['II']} "
              f"III={counts['III']} IV={counts['IV']}")
    return 0


_COMMANDS = {
    "register": cmd_register,
    "morph": cmd_morph,
    "pipeline": cmd_pipeline,
    "eval": cmd_eval,
    "quadrants": cmd_quadrants,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()

    prescan = argparse.ArgumentParser(add_help=False)
    prescan.add_argument("--config", type=str, default=None)
    known, _ = prescan.parse_known_args(argv)
    if known.config:
        try:
            defaults = load_config(known.config)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        for subparser in subparsers.values():
            subparser.set_defaults(**defaults)

    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (CloudMorphError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
