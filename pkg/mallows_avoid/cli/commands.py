"""
Subcommand handlers.

Each handler takes its validated input model and the settings dictionary,
writes its files, and returns an exit code.
"""

import os
from typing import Any, Dict, Optional, Type, TypeVar

import numpy as np
from loguru import logger
from pydantic import BaseModel

from mallows_avoid.cli.models import (
    CompareInput,
    LimitInput,
    PartitionInput,
    SampleInput,
    ValidateInput,
)
from mallows_avoid.domains.core import avoids, inversions, pattern3, symmetry_apply
from mallows_avoid.domains.oracle import validate_all
from mallows_avoid.domains.permuton import (
    CompletedGraph,
    Excursion,
    empirical_excursion,
    empirical_measure_pair,
    excursion_from_graph,
    kolmogorov_distance,
    limit_density_pair_321,
    limit_excursion_231,
    limit_permuton,
    limit_rlm_curve,
    limit_rlm_curve_derivative,
    permuton_of_perm,
    rlm_curve_grid,
    x_star,
)
from mallows_avoid.domains.sampler import RunConfig, run_chain
from mallows_avoid.domains.theory import (
    action_231,
    action_321,
    minimizer_231,
    minimizer_321,
    partition_convergence,
    partition_limit,
    partition_poly,
)
from mallows_avoid.utils.io import (
    CsvSink,
    ensure_dir,
    read_json,
    read_permutation,
    write_csv,
    write_json,
    write_permutation_csv,
)
from mallows_avoid.utils.schema import validate_report, validate_sample_metadata
from mallows_avoid.utils.versions import collect_versions

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3

M = TypeVar("M", bound=BaseModel)


def load_overlay(config_path: Optional[str]) -> Dict[str, Any]:
    """Flat flag overlay from a JSON file; {} when no file is given."""
    if not config_path:
        return {}
    data = read_json(config_path)
    if not isinstance(data, dict):
        raise ValueError(f"Config overlay {config_path} must hold a JSON object")
    return {key.replace("-", "_"): value for key, value in data.items()}


def resolve_input(model: Type[M], flags: Dict[str, Any], overlay: Dict[str, Any]) -> M:
    """Flags given on the command line override the overlay."""
    values = dict(overlay)
    values.update({key: value for key, value in flags.items() if value is not None})
    return model(**values)


def _metadata(command: str, settings: Dict[str, Any], **fields: Any) -> Dict[str, Any]:
    return {
        "command": command,
        "versions": collect_versions().as_dict(),
        "settings": settings,
        **fields,
    }


def _digits(settings: Dict[str, Any]) -> int:
    return int(settings["output"]["float_digits"])


def cmd_sample(args: SampleInput, settings: Dict[str, Any]) -> int:
    """Run the chain and write permutation.csv, metadata.json and the optional streams."""
    out = ensure_dir(args.out)
    cfg = RunConfig(
        pattern=args.pattern,
        n=args.n,
        beta=args.beta,
        steps=args.steps,
        seed=args.seed,
        thin=args.thin,
        init=args.init,
        coupling_check=args.coupling_check,
        checkpoints=args.checkpoints,
        block_size=int(settings["sampler"]["block_size"]),
    )

    outputs = ["permutation.csv", "metadata.json"]
    sink = None
    if cfg.thin:
        sink = CsvSink(os.path.join(out, "thinned.csv"), ("step", "permutation"))
        outputs.append("thinned.csv")
    try:
        record = run_chain(
            cfg, on_record=(lambda step, p: sink.write((step, p.to_text()))) if sink else None
        )
    finally:
        if sink is not None:
            sink.close()

    write_permutation_csv(os.path.join(out, "permutation.csv"), record.permutation)
    if record.coupling is not None:
        write_csv(
            os.path.join(out, "coupling.csv"),
            ("step", "distance"),
            record.coupling.rows(),
            _digits(settings),
        )
        outputs.append("coupling.csv")

    meta = _metadata("sample", settings, outputs=outputs, **record.metadata())
    write_json(os.path.join(out, "metadata.json"), validate_sample_metadata(meta))
    logger.info(f"Sample written to {out}")
    return EXIT_OK


def cmd_limit(args: LimitInput, settings: Dict[str, Any]) -> int:
    """
    Write the limit curve, its weights or densities, and a summary.

    Curves describe the canonical image of the pattern under its symmetry,
    at the effective beta.
    """
    out = ensure_dir(args.out)
    digits = _digits(settings)
    alpha = pattern3(args.pattern)
    theory = settings["theory"]
    canonical = alpha.canonical
    beta = alpha.effective_beta(args.beta)
    xs = np.linspace(0.0, 1.0, args.grid + 1)
    f = limit_rlm_curve(canonical, beta, xs)
    if canonical == "231":
        phi = limit_excursion_231(beta, xs)
    else:
        phi = excursion_from_graph(CompletedGraph.from_values(f), m=args.grid).values
    write_csv(os.path.join(out, "curve.csv"), ("x", "f", "phi"), zip(xs, f, phi), digits)

    summary: Dict[str, Any] = {
        "pattern": alpha.tag,
        "canonical_pattern": canonical,
        "beta": args.beta,
        "effective_beta": beta,
        "grid": args.grid,
        "limit_log_partition": partition_limit(
            alpha, args.beta, float(theory["quad_tol"]), int(theory["max_subdivisions"])
        ),
    }
    # action of the canonical minimizer at the effective beta
    m = int(theory["limit_grid"])
    if canonical == "231":
        summary["minimizer_action"] = action_231(beta, minimizer_231(beta, m=m))
    else:
        summary["minimizer_action"] = action_321(beta, minimizer_321(beta, m=m))
    permuton = limit_permuton(
        canonical,
        beta,
        simpson_tol=float(settings["permuton"]["simpson_tol"]),
        table_size=int(settings["permuton"]["sample_table"]),
    )
    masses = permuton.component_masses()
    summary["components"] = [
        {"kind": component.kind, "mass": float(mass)}
        for component, mass in zip(permuton.components, masses)
    ]

    if canonical == "231":
        star = x_star(beta)
        slope = limit_rlm_curve_derivative(canonical, beta, xs)
        curve_weight = np.minimum(1.0, slope)
        antidiagonal = np.where(xs <= star, np.maximum(0.0, 1.0 - slope), 0.0)
        write_csv(
            os.path.join(out, "weights.csv"),
            ("x", "curve_weight", "antidiagonal_weight"),
            zip(xs, curve_weight, antidiagonal),
            digits,
        )
        summary["x_star"] = star
        summary["antidiagonal_mass_closed_form"] = 2.0 * star - 1.0 if beta > 0 else 0.0
    else:
        rho1, rho2 = limit_density_pair_321(beta, xs)
        write_csv(os.path.join(out, "measure.csv"), ("x", "rho1", "rho2"), zip(xs, rho1, rho2), digits)

    write_json(os.path.join(out, "summary.json"), _metadata("limit", settings, **summary))
    logger.info(f"Limit shape written to {out}")
    return EXIT_OK


def cmd_partition(args: PartitionInput, settings: Dict[str, Any]) -> int:
    """Write partition.csv and, with exact, one poly_n{n}.csv per size."""
    out = ensure_dir(args.out)
    digits = _digits(settings)
    sizes = args.sizes()
    theory = settings["theory"]
    table = partition_convergence(
        args.pattern,
        args.beta,
        sizes,
        tol=float(theory["quad_tol"]),
        max_subdivisions=int(theory["max_subdivisions"]),
    )
    write_csv(
        os.path.join(out, "partition.csv"),
        ("n", "log_z_over_n", "limit", "residual"),
        table.rows(),
        digits,
    )

    written = []
    if args.exact:
        cap = int(settings["theory"]["n_max_exact"])
        for n in sizes:
            if n > cap:
                logger.warning(f"Skipping exact polynomial for n={n} above n_max_exact={cap}")
                continue
            poly = partition_poly(args.pattern, n, cap)
            write_csv(os.path.join(out, f"poly_n{n}.csv"), ("k", "coeff"), poly.rows())
            written.append(n)

    meta = _metadata(
        "partition",
        settings,
        pattern=args.pattern,
        beta=args.beta,
        n_list=sizes,
        exact=args.exact,
        exact_sizes=written,
        limit=table.limit,
    )
    write_json(os.path.join(out, "metadata.json"), meta)
    logger.info(f"Partition table written to {out}")
    return EXIT_OK


def cmd_compare(args: CompareInput, settings: Dict[str, Any]) -> int:
    """
    Distances from an empirical permutation to the limit objects at beta.

    231 family: sup distance of the excursion, grid-CDF distance between the
    antidiagonal-cell permuton and the limit. 321 family: Kolmogorov distance
    of the strict right-to-left minima pair, grid-CDF distance between the
    diagonal-cell permuton and the limit. Both report the sup distance of the
    RLM curves read off the two grid permutons.
    """
    out = ensure_dir(args.out)
    alpha = pattern3(args.pattern)
    p = read_permutation(args.input)
    if not avoids(alpha, p):
        raise ValueError(f"Input permutation is not {alpha.tag}-avoiding")
    canonical = alpha.canonical
    beta = alpha.effective_beta(args.beta)
    image = symmetry_apply(alpha, p)
    n = p.n
    G = args.grid or int(settings["permuton"]["grid"])

    result: Dict[str, Any] = {
        "pattern": alpha.tag,
        "canonical_pattern": canonical,
        "beta": args.beta,
        "effective_beta": beta,
        "n": n,
        "inversions": inversions(p),
        "grid": G,
        "input": os.path.abspath(args.input),
    }
    if canonical == "231":
        phi = empirical_excursion(image)
        target = Excursion(limit_excursion_231(beta, phi.grid))
        result["excursion_distance"] = kolmogorov_distance(phi, target)
        variant = "antidiag"
    else:
        pair = empirical_measure_pair(image)
        result["pair_distance"] = kolmogorov_distance(pair, minimizer_321(beta, m=n))
        variant = "diag"
    empirical = permuton_of_perm(image, variant=variant, G=G)
    limit = limit_permuton(
        canonical,
        beta,
        simpson_tol=float(settings["permuton"]["simpson_tol"]),
        table_size=int(settings["permuton"]["sample_table"]),
    ).cdf_grid(G)
    result["permuton_variant"] = variant
    result["permuton_distance"] = kolmogorov_distance(empirical, limit)
    empirical_curve = rlm_curve_grid(empirical, 1.0 / (2.0 * n))
    limit_curve = rlm_curve_grid(limit, float(settings["permuton"]["tol_mass"]))
    result["rlm_curve_distance"] = float(np.abs(empirical_curve - limit_curve).max())

    write_json(os.path.join(out, "compare.json"), _metadata("compare", settings, **result))
    for key in ("excursion_distance", "pair_distance", "permuton_distance", "rlm_curve_distance"):
        if key in result:
            logger.info(f"{key}: {result[key]:.6f}")
    return EXIT_OK


def cmd_validate(args: ValidateInput, settings: Dict[str, Any]) -> int:
    """Run every validation suite; exit code 1 iff a suite failed."""
    oracle = settings["oracle"]
    n_max = args.n_max if args.n_max is not None else int(oracle["n_max"])
    report = validate_all(
        n_max=n_max,
        ball_n=args.ball_n,
        ball_eps=float(oracle["ball_eps"]),
        cap=int(oracle["enumeration_cap"]),
        tol_mass=float(settings["permuton"]["tol_mass"]),
    )
    entries = validate_report(report.to_json())
    if args.out:
        path = args.out
        if not path.endswith(".json"):
            path = os.path.join(ensure_dir(path), "validation_report.json")
        else:
            parent = os.path.dirname(os.path.abspath(path))
            ensure_dir(parent)
        write_json(path, entries)
        logger.info(f"Report written to {path}")
    for suite in report.failed_suites():
        logger.error(f"{suite.suite} n={suite.n}: {suite.first_counterexample}")
    logger.info(f"{report.failures} failures in {len(entries)} suites")
    return EXIT_OK if report.passed else EXIT_VALIDATION_FAILED
