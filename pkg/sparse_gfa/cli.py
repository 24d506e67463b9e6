"""Command line interface for sparse-gfa."""

import click
import dataclasses
import sys
from pathlib import Path
from typing import Dict, List, NoReturn, Optional, Sequence

import numpy as np
import pandas as pd
from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import __version__
from .components import (
    ComponentKind,
    ComponentReport,
    activity_matrix,
    build_component_reports,
    chain_similarity,
)
from .config import Config, configure_logging
from .diagnostics import gelman_rubin
from .exceptions import (
    ConfigurationError,
    FileError,
    GFAError,
    InvalidInputError,
    NoResultError,
    NumericalError,
    ParseError,
)
from .file_manager import STATUS_COMPLETE, ModelDirectory
from .gibbs import ChainTrace, chain_selection, posterior_summary, run_chains
from .ingest import (
    ProfileTable,
    assemble_dataset,
    load_view,
    merge_replicates,
    save_view,
    threshold_table,
)
from .manifest import RunManifest, ViewSpec, safe_name
from .model import generate_synthetic
from .validation import build_graph, load_compound_ids, load_edge_list, validation_curve

console = Console()

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def print_error(message: str) -> None:
    """Print an error message."""
    console.print(f"[red]Error:[/red] {message}")


def print_success(message: str) -> None:
    """Print a success message."""
    console.print(f"[green]Success:[/green] {message}")


def print_info(message: str) -> None:
    """Print an info message."""
    console.print(f"[blue]Info:[/blue] {message}")


def exit_code_for(error: BaseException) -> int:
    """Process exit code for an error raised by a command."""
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(error, ConfigurationError):
        return EXIT_USAGE
    if isinstance(error, GFAError):
        return EXIT_DATA
    return EXIT_USAGE


def fail(error: Exception) -> NoReturn:
    """Report an error and exit with its code; click errors pass through."""
    if isinstance(error, click.ClickException):
        raise error
    if isinstance(error, NumericalError):
        print_error(f"Numerical error: {error}")
    elif isinstance(error, ConfigurationError):
        print_error(f"Configuration error: {error}")
    elif isinstance(error, GFAError):
        print_error(str(error))
    else:
        print_error(f"Unexpected error: {error}")
    sys.exit(exit_code_for(error))


class ExitCodeGroup(click.Group):
    """Click group whose usage errors exit with code 1."""

    def main(self, *args, **kwargs):  # type: ignore[override]
        kwargs["standalone_mode"] = False
        try:
            return super().main(*args, **kwargs)
        except click.exceptions.Abort:
            print_info("Operation cancelled by user")
            sys.exit(EXIT_USAGE)
        except click.ClickException as e:
            e.show()
            sys.exit(EXIT_USAGE)


def _read_activity(path: str) -> np.ndarray:
    """M x K activity pattern: a header of component names, one row per view."""
    try:
        frame = pd.read_csv(path, sep="\t", index_col=0)
        return frame.to_numpy(dtype=float)
    except (ValueError, pd.errors.ParserError) as e:
        raise ParseError(f"invalid activity table: {e}", path)


def _parse_list(value: Optional[str], option: str) -> Optional[List[str]]:
    if value is None:
        return None
    items = [v.strip() for v in value.split(",")]
    if not all(items):
        raise click.BadParameter("empty entry in comma-separated list", param_hint=option)
    return items


@click.group(cls=ExitCodeGroup)
@click.version_option(version=__version__)
@click.option("--config", type=click.Path(dir_okay=False), help="Path to configuration file")
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Override the configured log level",
)
@click.pass_context
def main(ctx: click.Context, config: Optional[str], log_level: Optional[str]):
    """Sparse Group Factor Analysis

    Fit a multi-view Bayesian group factor analysis model with Gibbs sampling,
    report shared and view-specific components, and validate them against an
    ontology graph.
    """
    try:
        cfg = Config(Path(config) if config else None)
        cfg.validate()
    except ConfigurationError as e:
        fail(e)
    configure_logging(log_level or cfg.get("logging.level", "INFO"), cfg.get("logging.file"))
    ctx.obj = cfg


@main.command()
@click.option("--n-samples", "-n", default=200, show_default=True, help="Number of samples N")
@click.option("--dims", required=True, help="Comma-separated feature count per view")
@click.option("--names", help="Comma-separated view names (default: view0, view1, ...)")
@click.option("--roles", help="Comma-separated role per view (default: one role per view)")
@click.option("--n-components", "-K", type=int, help="Components K (default: model.K)")
@click.option(
    "--activity",
    type=click.Path(exists=True, dir_okay=False),
    help="TSV of the M x K binary activity pattern (default: all active)",
)
@click.option("--snr", default=1.0, show_default=True, help="Signal-to-noise variance ratio")
@click.option("--seed", type=int, help="Random seed (default: sampling.seed)")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory")
@click.pass_obj
def generate(
    cfg: Config,
    n_samples: int,
    dims: str,
    names: Optional[str],
    roles: Optional[str],
    n_components: Optional[int],
    activity: Optional[str],
    snr: float,
    seed: Optional[int],
    out: str,
):
    """Generate a synthetic multi-view dataset with known components."""
    if snr <= 0:
        raise click.BadParameter("must be positive", param_hint="--snr")
    try:
        dim_list = [int(d) for d in _parse_list(dims, "--dims") or []]
    except ValueError:
        raise click.BadParameter("expected integers", param_hint="--dims")
    view_names = _parse_list(names, "--names") or [f"view{m}" for m in range(len(dim_list))]
    role_list = _parse_list(roles, "--roles") or list(view_names)
    if not (len(view_names) == len(role_list) == len(dim_list)):
        raise click.BadParameter("--dims, --names and --roles must have equal lengths")
    if len({safe_name(n) for n in view_names}) != len(view_names):
        raise click.BadParameter("names must map to distinct file names", param_hint="--names")

    if activity and n_components is not None:
        raise click.BadParameter(
            "the component count comes from --activity", param_hint="-K/--n-components"
        )

    try:
        model = cfg.model_config()
        if activity:
            pattern = _read_activity(activity)
            if pattern.shape[0] != len(dim_list):
                raise click.BadParameter(
                    f"{pattern.shape[0]} rows, expected one per view ({len(dim_list)})",
                    param_hint="--activity",
                )
            model = dataclasses.replace(model, K=pattern.shape[1])
        else:
            if n_components is not None:
                model = dataclasses.replace(model, K=n_components)
            pattern = np.ones((len(dim_list), model.K), dtype=int)
        seed = cfg.get("sampling.seed", 0) if seed is None else seed

        dataset, truth = generate_synthetic(
            model, n_samples, dim_list, pattern, snr, seed=seed, view_names=view_names
        )

        out_dir = Path(out)
        specs = []
        for view, role in zip(dataset.views, role_list):
            table = ProfileTable(view.values, view.sample_ids, view.feature_names, view.name)
            save_view(table, out_dir / f"{ModelDirectory.safe_name(view.name)}.tsv")
            specs.append(ViewSpec(path=f"{ModelDirectory.safe_name(view.name)}.tsv", role=role))

        truth_dir = ModelDirectory(out_dir / "truth", create=True)
        columns = [f"k{k}" for k in range(model.K)]
        pd.DataFrame(
            truth.activity, index=pd.Index(view_names, name="view"), columns=columns
        ).to_csv(truth_dir.path("activity.tsv"), sep="\t", lineterminator="\n")
        pd.DataFrame(
            truth.state.Z, index=pd.Index(dataset.sample_ids, name="sample_id"), columns=columns
        ).to_csv(truth_dir.path("Z.tsv"), sep="\t", float_format="%.17g", lineterminator="\n")
        for view, w in zip(dataset.views, truth.state.W):
            pd.DataFrame(
                w, index=pd.Index(view.feature_names, name="feature"), columns=columns
            ).to_csv(
                truth_dir.path(f"W_{ModelDirectory.safe_name(view.name)}.tsv"),
                sep="\t",
                float_format="%.17g",
                lineterminator="\n",
            )

        manifest = RunManifest(
            views=specs,
            model=model,
            schedule=cfg.sampling_schedule(),
            output_dir="model",
        )
        manifest.compute_hashes(out_dir)
        manifest.save(out_dir / "manifest.json")

        print_success(
            f"Wrote {dataset.n_views} views of {dataset.n_samples} samples to {out_dir}"
        )
    except Exception as e:
        fail(e)


@main.command()
@click.argument("views", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--merge/--no-merge", default=None, help="Average replicate rows")
@click.option("--threshold/--no-threshold", default=None, help="Keep only top up/down features")
@click.option("--n-up", type=int, help="Positive entries kept per row (default: 2000)")
@click.option("--n-down", type=int, help="Negative entries kept per row (default: 2000)")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory")
@click.pass_obj
def preprocess(
    cfg: Config,
    views: Sequence[str],
    merge: Optional[bool],
    threshold: Optional[bool],
    n_up: Optional[int],
    n_down: Optional[int],
    out: str,
):
    """Merge replicates and threshold view files (merge first, then threshold)."""
    settings = _preprocessing_settings(cfg, merge, threshold, n_up, n_down)
    try:
        out_dir = Path(out)
        for path in views:
            table = _preprocess_table(load_view(path), settings)
            target = save_view(table, out_dir / Path(path).name)
            print_info(f"{path}: {len(table.row_ids)} rows -> {target}")
        print_success(f"Preprocessed {len(views)} views into {out_dir}")
    except Exception as e:
        fail(e)


def _preprocessing_settings(
    cfg: Config,
    merge: Optional[bool],
    threshold: Optional[bool],
    n_up: Optional[int],
    n_down: Optional[int],
) -> Dict[str, object]:
    settings = dict(cfg.get("preprocessing", {}))
    for key, value in (
        ("merge_replicates", merge),
        ("threshold", threshold),
        ("n_up", n_up),
        ("n_down", n_down),
    ):
        if value is not None:
            settings[key] = value
    for key in ("n_up", "n_down"):
        if int(settings[key]) < 0:
            raise click.BadParameter("must not be negative", param_hint=f"--{key.replace('_', '-')}")
    return settings


def _preprocess_table(table: ProfileTable, settings: Dict[str, object]) -> ProfileTable:
    if settings.get("merge_replicates"):
        table = merge_replicates(table)
    if settings.get("threshold"):
        table = threshold_table(table, int(settings["n_up"]), int(settings["n_down"]))  # type: ignore[arg-type]
    return table


def _parse_view_option(value: str) -> ViewSpec:
    path, sep, role = value.rpartition(":")
    if not sep or not path or not role:
        raise click.BadParameter(f"expected PATH:ROLE, got {value!r}", param_hint="--view")
    return ViewSpec(path=path, role=role)


@main.command()
@click.argument("manifest", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--view", "views", multiple=True, help="View file and role as PATH:ROLE (repeatable)")
@click.option("--n-components", "-K", type=int, help="Component budget K")
@click.option("--chains", type=int, help="Number of chains")
@click.option("--burn-in", type=int, help="Discarded sweeps per chain")
@click.option("--samples", type=int, help="Sweeps after burn-in")
@click.option("--thin", type=int, help="Keep every n-th post burn-in sweep")
@click.option("--center/--no-center", default=None, help="Center columns to zero mean")
@click.option("--scale/--no-scale", default=None, help="Scale columns to unit variance")
@click.option("--seed", type=int, help="Master random seed")
@click.option("--jobs", type=int, help="Chains run concurrently")
@click.option("--out", type=click.Path(file_okay=False), help="Model directory")
@click.pass_obj
def fit(
    cfg: Config,
    manifest: Optional[str],
    views: Sequence[str],
    n_components: Optional[int],
    chains: Optional[int],
    burn_in: Optional[int],
    samples: Optional[int],
    thin: Optional[int],
    center: Optional[bool],
    scale: Optional[bool],
    seed: Optional[int],
    jobs: Optional[int],
    out: Optional[str],
):
    """Fit the model: preprocess, sample chains, select one, summarize."""
    if manifest and views:
        raise click.UsageError("give either a MANIFEST or --view options, not both")
    if not manifest and len(views) < 2:
        raise click.UsageError("need a MANIFEST or at least two --view PATH:ROLE options")
    if jobs is not None and jobs < 1:
        raise click.BadParameter("must be at least 1", param_hint="--jobs")

    try:
        if manifest:
            run = RunManifest.load(manifest)
            base_dir = Path(manifest).parent
        else:
            run = RunManifest(
                views=[_parse_view_option(v) for v in views],
                model=cfg.model_config(),
                schedule=cfg.sampling_schedule(),
                preprocessing=dict(cfg.get("preprocessing", {})),
            )
            base_dir = Path.cwd()
            if out is None:
                raise click.BadParameter("required without a MANIFEST", param_hint="--out")

        model_overrides = {
            key: value
            for key, value in (
                ("K", n_components),
                ("center_columns", center),
                ("scale_columns", scale),
            )
            if value is not None
        }
        schedule_overrides = {
            key: value
            for key, value in (
                ("n_chains", chains),
                ("burn_in", burn_in),
                ("n_samples", samples),
                ("thinning", thin),
                ("seed", seed),
            )
            if value is not None
        }
        run.model = dataclasses.replace(run.model, **model_overrides)
        run.schedule = dataclasses.replace(run.schedule, **schedule_overrides)
        if out is not None:
            run.output_dir = out
        run.validate()
    except Exception as e:
        fail(e)

    output = Path(run.output_dir)
    if out is None and not output.is_absolute():
        output = base_dir / output
    try:
        model_dir = ModelDirectory(output, create=True)
    except OSError as e:
        fail(FileError(f"cannot create model directory {output}: {e}"))
    try:
        run_fit(run, base_dir, model_dir, cfg, jobs or cfg.jobs)
        reports = summarize_model(model_dir, cfg)
        _print_components(reports, model_dir.read_manifest().roles().roles)
        print_success(f"Model written to {model_dir.base_dir}")
    except Exception as e:
        try:
            model_dir.mark_failed(str(e))
        except GFAError:
            pass
        fail(e)


def run_fit(
    run: RunManifest, base_dir: Path, model_dir: ModelDirectory, cfg: Config, jobs: int
) -> None:
    """Run every fit stage and write the model directory."""
    if run.input_hashes:
        run.verify_hashes(base_dir)
    else:
        run.compute_hashes(base_dir)
    model_dir.write_manifest(run)

    tables = []
    for spec in run.views:
        path = run.resolve(spec, base_dir)
        table = _preprocess_table(load_view(path, name=spec.view_name), run.preprocessing)
        tables.append(table)
    dataset = assemble_dataset(
        tables, center=run.model.center_columns, scale=run.model.scale_columns
    )
    print_info(
        f"{dataset.n_views} views, {dataset.n_samples} paired samples, "
        f"K={run.model.K}, {run.schedule.n_chains} chains"
    )

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        console=console,
    ) as progress:
        task = progress.add_task("Sampling chains...", total=run.schedule.n_chains)

        def on_finish(trace: ChainTrace) -> None:
            if trace.failed:
                print_error(f"Chain {trace.chain_index} failed: {trace.error}")
            progress.advance(task)

        traces = run_chains(dataset, run.model, run.schedule, jobs=jobs, on_finish=on_finish)

    selection = chain_selection(traces)
    model_dir.write_chains(traces, selection)

    threshold = float(cfg.get("summary.activity_threshold", 0.5))
    summary = posterior_summary(traces[selection.selected], threshold)
    activity = activity_matrix(summary, threshold)
    feature_names = {v.name: v.feature_names for v in dataset.views}
    model_dir.write_summary(summary, dataset.sample_ids, dataset.view_names, feature_names, activity)

    similarity = None
    if selection.runner_up is not None:
        try:
            similarity = chain_similarity(
                summary,
                posterior_summary(traces[selection.runner_up], threshold),
                match_threshold=float(cfg.get("summary.match_threshold", 0.8)),
                roles=run.roles(),
                view_names=dataset.view_names,
                activity_threshold=threshold,
            )
        except NoResultError:
            similarity = None

    rhat = gelman_rubin([t.retained_log_densities for t in traces if not t.failed])
    model_dir.write_json(
        ModelDirectory.FIT_REPORT,
        {
            "status": STATUS_COMPLETE,
            "selected_chain": selection.selected,
            "runner_up_chain": selection.runner_up,
            "outlier_chains": selection.outliers,
            "failed_chains": selection.failed,
            "n_states": summary.n_states,
            "activity_threshold": threshold,
            "chain_similarity": similarity,
            "gelman_rubin": rhat if rhat is not None and np.isfinite(rhat) else None,
            "dropped_rows": dataset.dropped_rows,
        },
    )
    print_info(f"Selected chain {selection.selected} ({summary.n_states} retained states)")
    if similarity is not None:
        print_info(f"Shared components reproduced in chain {selection.runner_up}: {similarity:.0%}")


def summarize_model(
    model_dir: ModelDirectory,
    cfg: Config,
    n_loadings: Optional[int] = None,
    q_threshold: Optional[float] = None,
    n_permutations: Optional[int] = None,
    activity_threshold: Optional[float] = None,
    seed: Optional[int] = None,
) -> List[ComponentReport]:
    """Write component reports for a fitted model directory.

    The summary loadings were zeroed at the fit's activity threshold, so a
    different threshold here is rejected.
    """
    model_dir.verify()
    fitted = float(
        model_dir.read_fit_report().get(
            "activity_threshold", cfg.get("summary.activity_threshold")
        )
    )
    if activity_threshold is not None and not np.isclose(activity_threshold, fitted):
        raise click.BadParameter(
            f"the model was summarized at {fitted:g}; refit to use {activity_threshold:g}",
            param_hint="--activity-threshold",
        )
    run = model_dir.read_manifest()
    bundle = model_dir.read_summary()
    reports = build_component_reports(
        bundle.summary,
        bundle.sample_ids,
        bundle.view_names,
        bundle.feature_names,
        run.roles(),
        activity_threshold=fitted,
        n_loadings=n_loadings or int(cfg.get("summary.n_loadings")),
        q_threshold=q_threshold if q_threshold is not None else float(cfg.get("summary.q_threshold")),
        n_permutations=n_permutations or int(cfg.get("summary.n_permutations")),
        rng=run.schedule.seed if seed is None else seed,
    )
    model_dir.write_reports(reports, bundle.view_names)
    return reports


def _print_components(reports: Sequence[ComponentReport], roles: Dict[str, str]) -> None:
    if not reports:
        print_info("No active components")
        return
    table = Table(title="Components")
    table.add_column("Label", style="cyan")
    table.add_column("Kind", style="green")
    table.add_column("Active views")
    table.add_column("Variance", justify="right", style="yellow")
    table.add_column("Significant", justify="right", style="blue")
    views = list(roles)
    for r in reports:
        active = ", ".join(v for v, flag in zip(views, r.activity) if flag)
        kind = r.kind.value if r.role is None else f"{r.kind.value} ({r.role})"
        table.add_row(r.label, kind, active, f"{r.variance:.4g}", str(len(r.significant_samples)))
    console.print(table)


@main.command()
@click.argument("model_dir", type=click.Path(file_okay=False))
@click.option("--n-loadings", type=int, help="Top loadings per view (default: 30)")
@click.option("--q-threshold", type=float, help="q-value cutoff (default: 0.05)")
@click.option("--n-permutations", type=int, help="Sign-flip permutations (default: 10000)")
@click.option("--activity-threshold", type=float, help="Activation probability cutoff; must match the fit (default: the fit's)")
@click.option("--seed", type=int, help="Random seed (default: the fit's seed)")
@click.pass_obj
def summarize(
    cfg: Config,
    model_dir: str,
    n_loadings: Optional[int],
    q_threshold: Optional[float],
    n_permutations: Optional[int],
    activity_threshold: Optional[float],
    seed: Optional[int],
):
    """Write component reports for a fitted model."""
    try:
        directory = ModelDirectory(model_dir)
        reports = summarize_model(
            directory, cfg, n_loadings, q_threshold, n_permutations, activity_threshold, seed
        )
        _print_components(reports, directory.read_manifest().roles().roles)
        print_success(f"Reports written to {directory.path(ModelDirectory.REPORTS)}")
    except Exception as e:
        fail(e)


@main.command()
@click.argument("model_dir", type=click.Path(file_okay=False))
@click.option("--edges", required=True, type=click.Path(exists=True, dir_okay=False), help="Two-column TSV edge list")
@click.option("--compounds", required=True, type=click.Path(exists=True, dir_okay=False), help="One compound id per line")
@click.option("--min-length", type=int, help="Shortest path-length cutoff (default: 2)")
@click.option("--max-length", type=int, help="Longest path-length cutoff (default: 16)")
@click.option("--n-draws", type=int, help="Random baseline draws (default: 1000)")
@click.option("--seed", type=int, help="Random seed (default: the fit's seed)")
@click.pass_obj
def validate(
    cfg: Config,
    model_dir: str,
    edges: str,
    compounds: str,
    min_length: Optional[int],
    max_length: Optional[int],
    n_draws: Optional[int],
    seed: Optional[int],
):
    """Compare shared-component sample sets with random sets in an ontology graph."""
    try:
        directory = ModelDirectory(model_dir)
        directory.verify()
        run = directory.read_manifest()

        components = directory.read_components()
        shared = components.loc[components["kind"] == ComponentKind.SHARED.value, "label"]
        if shared.empty:
            raise NoResultError("the model has no shared components to validate")
        hits = directory.read_significant_samples()
        member_sets = [
            hits.loc[hits["label"] == label, "sample_id"].tolist() for label in shared
        ]
        if not any(member_sets):
            raise NoResultError("no shared component has significant samples")

        low = min_length if min_length is not None else int(cfg.get("validation.min_length"))
        high = max_length if max_length is not None else int(cfg.get("validation.max_length"))
        if low < 1 or high < low:
            raise InvalidInputError(f"invalid path-length range {low}..{high}")

        graph = build_graph(load_edge_list(edges), load_compound_ids(compounds))
        curve = validation_curve(
            graph,
            member_sets,
            lengths=list(range(low, high + 1)),
            n_draws=n_draws or int(cfg.get("validation.n_draws")),
            rng=run.schedule.seed if seed is None else seed,
        )
        path = directory.write_curve(curve)

        table = Table(title="Mean average similarity")
        table.add_column("L", justify="right", style="cyan")
        table.add_column("Components", justify="right", style="green")
        table.add_column("Random", justify="right", style="yellow")
        for L, value, mean, std in zip(
            curve.lengths, curve.values, curve.baseline_mean, curve.baseline_std
        ):
            table.add_row(str(L), f"{value:.4f}", f"{mean:.4f} ± {std:.4f}")
        console.print(table)
        print_success(f"Curve written to {path}")
    except Exception as e:
        fail(e)


if __name__ == "__main__":
    main()
