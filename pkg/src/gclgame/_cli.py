import contextlib
import logging
import pathlib
import sys
import types

import ansimarkup
import braceexpand
import click
import numpy as np
import pandas as pd

from . import continual, diagnostics, gnn, graph, hpo, metrics, plots, streamfile, toys
from .errors import (
    BoundViolation,
    Divergence,
    EmptyMatrix,
    InsufficientGrid,
    InvalidConfig,
    NonFiniteResult,
    NoSuccessfulTrials,
    StreamFileError,
    TooFewTasks,
)
from .game import GameConfig, train_task
from .outputs import OutputDir, list_csvs, read_csv

log = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_INTERRUPTED = 130

FLAGS = dict(
    num_tasks='--tasks',
    classes_per_task='--classes-per-task',
    universe_size='--universe',
    vertices_per_task='--vertices',
    feature_dim='--feature-dim',
    edge_feature_dim='--edge-feature-dim',
    mean_scale='--mean-scale',
    feature_noise='--noise',
    p_in='--p-in',
    p_out='--p-out',
    drift='--drift',
    resample_fraction='--resample',
    edge_noise='--edge-noise',
    graphs_per_task='--graphs-per-task',
    graph_size='--graph-size',
    labeled_fraction='--labeled',
    beta1='--beta1',
    beta2='--beta2',
    beta3='--beta3',
    zeta='--zeta',
    rho='--rho',
    alpha_u='--alpha-u',
    alpha_w='--alpha-w',
    r_x='--radius-x',
    r_phi='--radius-phi',
    r_w='--radius-w',
    batch_b='--batch',
    buffer_capacity='--buffer',
    optimizer='--optimizer',
    schedule='--schedule',
    nlays='--nlays',
    hc='--hc',
    drop='--drop',
    space='--space',
    q='--quantile',
    n_trials='--trials',
    n='--samples',
    records='--quantile',
    sample_count='--samples',
    seeds='--seeds',
    method='--method',
)


def exit_code(e):
    if isinstance(e, (InvalidConfig, TooFewTasks, InsufficientGrid, NoSuccessfulTrials, EmptyMatrix)):
        return EXIT_USAGE
    if isinstance(e, (StreamFileError, OSError)):
        return EXIT_IO
    if isinstance(e, (Divergence, NonFiniteResult, BoundViolation)):
        return EXIT_NUMERIC
    return EXIT_FAILURE


def describe(e):
    if isinstance(e, InvalidConfig) and e.field in FLAGS:
        return "invalid value for {}: {}".format(FLAGS[e.field], e.message)
    return str(e)


@contextlib.contextmanager
def reporting_failures():
    debug = click.get_current_context().find_root().obj.debug

    try:
        yield
    except (click.exceptions.ClickException, click.exceptions.Abort):
        raise
    except Exception as e:
        if debug:
            raise
        click.secho("error: {}".format(describe(e)), err=True, fg='red')
        sys.exit(exit_code(e))


class PathType(click.Path):
    def coerce_path_result(self, rv):
        return pathlib.Path(super().coerce_path_result(rv))


def join_split(seq, sep=None):
    r = (sep or " ").join(seq).split(sep)
    if r == ['']:
        return []
    else:
        return r


def expand_ints(values, flag):
    """Integers from space separated, brace-expanded words: "{0..4} 10" -> [0, 1, 2, 3, 4, 10]."""
    result = []

    for word in join_split(values):
        for item in braceexpand.braceexpand(word):
            try:
                result.append(int(item))
            except ValueError:
                raise click.BadParameter("'{}' is not an integer".format(item), param_hint=flag)

    if not result:
        raise click.BadParameter("no values given", param_hint=flag)

    return result


def echo_settings(settings):
    for name, value in sorted(settings.items()):
        if hasattr(value, 'value'):
            value = value.value
        click.echo("{}={}".format(FLAGS.get(name, name).lstrip('-'), value))


def echo_check(ok, message):
    tag = "<green>PASS</green>" if ok else "<red>FAIL</red>"
    click.echo(ansimarkup.parse(tag) + " " + message)


def options(*decorators):
    def apply(f):
        for d in reversed(decorators):
            f = d(f)
        return f

    return apply


_game = GameConfig.FIELDS
_model = gnn.ModelConfig.FIELDS

game_options = options(
    click.option('--beta1', type=float, default=_game['beta1'], show_default=True,
                 help="weight of the vertex-feature perturbation term"),
    click.option('--beta2', type=float, default=_game['beta2'], show_default=True,
                 help="weight of the edge-feature perturbation term"),
    click.option('--beta3', type=float, default=_game['beta3'], show_default=True,
                 help="weight of the weight perturbation term"),
    click.option('--zeta', type=click.IntRange(min=0), default=_game['zeta'], show_default=True,
                 help="ascent steps per descent step (0 switches the game off)"),
    click.option('--rho', type=click.IntRange(min=1), default=_game['rho'], show_default=True,
                 help="descent steps per task"),
    click.option('--alpha-u', type=float, default=_game['alpha_u'], show_default=True,
                 help="ascent learning rate"),
    click.option('--alpha-w', type=float, default=_game['alpha_w'], show_default=True,
                 help="descent learning rate"),
    click.option('--batch', type=click.IntRange(min=2), default=_game['batch_b'], show_default=True,
                 help="minibatch size of the joint sampler"),
    click.option('--buffer', type=click.IntRange(min=0), default=_game['buffer_capacity'], show_default=True,
                 help="replay buffer capacity"),
    click.option('--radius-x', type=float, default=_game['r_x'], show_default=True,
                 help="projection radius of the vertex-feature perturbation"),
    click.option('--radius-phi', type=float, default=_game['r_phi'], show_default=True,
                 help="projection radius of the edge-feature perturbation"),
    click.option('--radius-w', type=float, default=_game['r_w'], show_default=True,
                 help="projection radius of the weight perturbation"),
    click.option('--optimizer', type=click.Choice(['sgd', 'adam']), default=_game['optimizer'], show_default=True),
    click.option('--schedule', type=click.Choice(['sqrt', 'constant']), default=_game['schedule'], show_default=True,
                 help="'sqrt' divides the rates by sqrt(zeta) and sqrt(rho)"),
)

model_options = options(
    click.option('--nlays', type=click.IntRange(min=1), default=_model['nlays'], show_default=True,
                 help="number of attention layers"),
    click.option('--hc', type=click.IntRange(min=1), default=_model['hc'], show_default=True,
                 help="hidden channels"),
    click.option('--drop', type=float, default=_model['drop'], show_default=True,
                 help="dropout rate in front of each layer"),
)

stream_option = click.option(
    '--stream',
    type=PathType(dir_okay=False, exists=True),
    help="task stream JSON written by 'gclgame gen'"
)

out_dir_option = click.option(
    '--out-dir',
    type=PathType(file_okay=False),
    default='.',
    show_default=True,
    help="directory for CSV, SVG and checkpoint output"
)

score_option = click.option(
    '--score',
    type=click.Choice(['acc', 'f1']),
    default='acc',
    show_default=True,
    help="per-task score: accuracy or micro-F1"
)


def make_game_config(opts):
    return GameConfig(
        beta1=opts.beta1,
        beta2=opts.beta2,
        beta3=opts.beta3,
        zeta=opts.zeta,
        rho=opts.rho,
        alpha_u=opts.alpha_u,
        alpha_w=opts.alpha_w,
        r_x=opts.radius_x,
        r_phi=opts.radius_phi,
        r_w=opts.radius_w,
        batch_b=opts.batch,
        buffer_capacity=opts.buffer,
        optimizer=opts.optimizer,
        schedule=opts.schedule,
        seed=getattr(opts, 'seed', 0),
    )


def make_model_config(opts, stream=None):
    kw = dict(nlays=opts.nlays, hc=opts.hc, drop=opts.drop)
    if stream is None:
        return gnn.ModelConfig(**kw)
    return gnn.ModelConfig.for_stream(stream, **kw)


def require_stream(opts):
    if opts.stream is None:
        raise click.UsageError("missing option '--stream'")

    stream = streamfile.load_stream(opts.stream)
    log.info("stream path=%s tasks=%d objective=%s", opts.stream, len(stream), stream.objective.value)
    return stream


@click.group()
@click.version_option()
@click.option(
    '--verbose', '-v',
    count=True,
    help="log progress; repeat for more detail"
)
@click.option(
    '--debug',
    is_flag=True,
    help="do not suppress exception stack traces"
)
@click.pass_context
def main(ctx, verbose, debug):
    """
    Graph continual learning as a game between a perturbation player and
    the network weights.

    Typical session:

        gclgame gen --tasks 3 --seed 7 -o s.json

        gclgame train --stream s.json --out-dir runs

        gclgame report runs

    Seed lists (--seeds, --rate-seeds) and grids (--zeta-grid, --rho-grid)
    take space separated integers and Bash-style brace expansion, so
    "{0..19}" means twenty seeds. Quote them to keep the shell away.
    """
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.obj = types.SimpleNamespace(verbose=verbose, debug=debug)


@main.command()
@click.option('--tasks', type=click.IntRange(min=1), default=3, show_default=True, help="number of tasks")
@click.option('--classes-per-task', type=click.IntRange(min=1), default=2, show_default=True)
@click.option('--universe', type=click.IntRange(min=1), default=200, show_default=True,
              help="size of the vertex universe")
@click.option('--vertices', type=click.IntRange(min=1), default=60, show_default=True,
              help="vertices per task")
@click.option('--feature-dim', type=click.IntRange(min=1), default=8, show_default=True)
@click.option('--edge-feature-dim', type=click.IntRange(min=0), default=0, show_default=True,
              help="0 stores constant unit edge weights")
@click.option('--mean-scale', type=float, default=1.0, show_default=True,
              help="norm of the random class feature means")
@click.option('--noise', type=float, default=1.0, show_default=True, help="vertex feature noise scale")
@click.option('--p-in', type=float, default=0.1, show_default=True, help="intra-class edge probability")
@click.option('--p-out', type=float, default=0.02, show_default=True, help="inter-class edge probability")
@click.option('--drift', type=float, default=0.0, show_default=True, help="per-task shift of the class means")
@click.option('--resample', type=float, default=0.0, show_default=True,
              help="fraction of vertices replaced from one task to the next")
@click.option('--edge-noise', type=float, default=0.0, show_default=True)
@click.option('--objective', type=click.Choice(['node', 'graph']), default='node', show_default=True)
@click.option('--graphs-per-task', type=click.IntRange(min=1), default=30, show_default=True)
@click.option('--graph-size', type=click.IntRange(min=1), default=12, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--output', '-o', type=PathType(dir_okay=False), help="stream file to write")
@click.option('--print-config', is_flag=True, help="show the resolved settings and exit")
def gen(**kwargs):
    """Generate a synthetic task stream with feature and vertex-set drift."""
    opts = types.SimpleNamespace(**kwargs)

    with reporting_failures():
        config = graph.SynthConfig(
            num_tasks=opts.tasks,
            classes_per_task=opts.classes_per_task,
            universe_size=opts.universe,
            vertices_per_task=opts.vertices,
            feature_dim=opts.feature_dim,
            edge_feature_dim=opts.edge_feature_dim,
            mean_scale=opts.mean_scale,
            feature_noise=opts.noise,
            p_in=opts.p_in,
            p_out=opts.p_out,
            drift=opts.drift,
            resample_fraction=opts.resample,
            edge_noise=opts.edge_noise,
            objective=dict(node=graph.Objective.NODE, graph=graph.Objective.GRAPH)[opts.objective],
            graphs_per_task=opts.graphs_per_task,
            graph_size=opts.graph_size,
        )

        if opts.print_config:
            settings = config.as_dict()
            del settings['class_means']
            echo_settings(dict(settings, seed=opts.seed))
            return

        if opts.output is None:
            raise click.UsageError("missing option '--output'")

        stream = graph.synth_verg_stream(config, opts.seed)
        streamfile.save_stream(stream, opts.output)

        vertices = np.unique(np.concatenate([g.vertex_ids for t in stream.tasks for g in t.graphs]))
        click.echo("wrote {}: tasks={} vertices={} classes={}".format(
            opts.output, len(stream), len(vertices), stream.num_classes_total))


def run_tag(method, seed):
    return "{}-s{}".format(method, seed)


@main.command()
@stream_option
@click.option('--seed', type=int, default=0, show_default=True)
@out_dir_option
@click.option('--method', type=click.Choice(continual.METHODS), default='game', show_default=True,
              help="game, the game without weight perturbation (nogame), plain replay, "
              "sequential fine-tuning, or joint training on everything seen so far")
@score_option
@game_options
@model_options
@click.option('--print-config', is_flag=True, help="show the resolved settings and exit")
def train(**kwargs):
    """Train over every task of a stream and log the accuracy matrix."""
    opts = types.SimpleNamespace(**kwargs)

    with reporting_failures():
        base = make_game_config(opts)
        game = continual.method_config(base, opts.method)
        model = make_model_config(opts)

        if opts.print_config:
            settings = dict(game.as_dict(), nlays=model.nlays, hc=model.hc, drop=model.drop)
            settings.update(method=opts.method, score=opts.score)
            echo_settings(settings)
            return

        stream = require_stream(opts)
        model = make_model_config(opts, stream)
        kind = metrics.ScoreKind.from_flag(opts.score)

        result = continual.run_continual(stream, model, base, opts.method, opts.seed, score_kind=kind)

        tag = run_tag(opts.method, opts.seed)
        report = metrics.MetricsReport()
        report.add(tag, opts.seed, opts.method, result.matrix)

        with OutputDir(opts.out_dir) as out:
            out.write_csv("metrics-{}.csv".format(tag), report.to_frame())
            out.write_csv("trace-{}.csv".format(tag), result.trace.to_frame())
            out.write_json("params-{}.json".format(tag), gnn.params_to_dict(result.params, model))
            if len(result.buffer):
                result.buffer.dump(out / "buffer-{}.json".format(tag), stream.universe, stream.num_classes_total)

        pm = metrics.pm(result.matrix)
        fm = metrics.fm(result.matrix) if len(stream) > 1 else float("nan")
        click.echo("{} {}: PM={:.4f} FM={:.4f}".format(kind.value, tag, pm, fm))


@main.command()
@stream_option
@click.option('--seeds', multiple=True, default=["{0..4}"], show_default=True, metavar='SEEDS',
              help="seeds to run every variant with")
@click.option('--workers', type=click.IntRange(min=1), default=1, show_default=True)
@out_dir_option
@score_option
@game_options
@model_options
def ablate(**kwargs):
    """Compare the full game, the game without weight perturbation and plain replay."""
    opts = types.SimpleNamespace(**kwargs)

    with reporting_failures():
        seeds = expand_ints(opts.seeds, '--seeds')
        game = make_game_config(opts)
        stream = require_stream(opts)
        model = make_model_config(opts, stream)

        report = diagnostics.run_ablation(
            stream, model, game, seeds, workers=opts.workers, score_kind=metrics.ScoreKind.from_flag(opts.score))
        summary = report.summary()

        with OutputDir(opts.out_dir) as out:
            out.write_csv("ablation.csv", report.to_frame())
            out.write_csv("ablation-summary.csv", summary)
            out.write_svg("ablation-fm.svg", plots.bar_chart(
                list(summary['variant']), summary['FM_mean'], summary['FM_std'],
                title="Forgetting by variant", ylabel="FM"))
            out.write_svg("ablation-pm.svg", plots.bar_chart(
                list(summary['variant']), summary['PM_mean'], summary['PM_std'],
                title="Performance by variant", ylabel="PM"))

        click.echo(summary.to_string(index=False))
        for (a, b), rate in sorted(report.win_rates().items()):
            click.echo("{} forgets less than {} on {:.0%} of seeds".format(a, b, rate))

        if report.interrupted:
            stop_interrupted(len(report.records), "runs")


@main.command()
@stream_option
@click.option('--seed', type=int, default=0, show_default=True)
@out_dir_option
@click.option('--zeta-grid', multiple=True, default=["10 30 100 300 1000"], show_default=True, metavar='GRID',
              help="inner loop lengths for the ascent rate fit")
@click.option('--rho-grid', multiple=True, default=["10 30 100 300 1000"], show_default=True, metavar='GRID',
              help="outer loop lengths for the descent rate fit")
@click.option('--rate-seeds', multiple=True, default=["{0..2}"], show_default=True, metavar='SEEDS',
              help="seeds averaged at every grid point")
@click.option('--delta', type=float, multiple=True, default=[0.1, 0.01], show_default=True,
              help="neighbourhood radii of the equilibrium check")
@click.option('--samples', type=click.IntRange(min=2), default=200, show_default=True,
              help="sampled points per constant estimate and residual")
@game_options
@model_options
def diagnose(**kwargs):
    """
    Convergence-rate fits on a small attention network, the equilibrium
    check on the saddle toy, and the gradient triangle bounds over a training
    trace (the --stream run when given, the small network otherwise).
    """
    opts = types.SimpleNamespace(**kwargs)

    with reporting_failures():
        zeta_grid = expand_ints(opts.zeta_grid, '--zeta-grid')
        rho_grid = expand_ints(opts.rho_grid, '--rho-grid')
        rate_seeds = expand_ints(opts.rate_seeds, '--rate-seeds')
        game = make_game_config(opts)
        stream = require_stream(opts) if opts.stream is not None else None

        problem, items, w0 = toys.tiny_gnn(opts.seed)
        fit_u = diagnostics.ascent_rate(problem, items, w0.values, toys.rate_game(), zeta_grid, rate_seeds)
        fit_w = diagnostics.descent_rate(problem, items, w0.values, toys.rate_game(), rho_grid, rate_seeds)

        rates = []
        for kind, fit in (('ascent', fit_u), ('descent', fit_w)):
            for step, value, predicted in zip(fit.grid, fit.minima, fit.predicted()):
                rates.append(dict(kind=kind, steps=int(step), min_sq=value, predicted=predicted, **fit.as_dict()))

        rng = np.random.default_rng(opts.seed)
        saddle, saddle_config = toys.saddle_game()
        w, u, batch = diagnostics.find_saddle(saddle, toys.toy_items(2), np.zeros(2), saddle_config, rng)
        u_exact, w_exact = saddle.saddle(saddle_config.beta1)
        constants = diagnostics.estimate_constants(saddle, batch, w, saddle_config, opts.samples, rng)

        equilibrium = []
        for delta in sorted(opts.delta, reverse=True):
            rep = diagnostics.equilibrium_residual(
                w, u, saddle, batch, saddle_config, delta, delta, opts.samples, rng, constants)
            equilibrium.append(dict(
                delta=delta,
                dist_u=float(np.linalg.norm(u.delta_x[toys.TOY_KEY].ravel() - u_exact)),
                dist_w=float(np.linalg.norm(w - w_exact)),
                **rep._asdict()
            ))

        if stream is not None:
            trace = continual.run_continual(stream, make_model_config(opts, stream), game, 'game', opts.seed).trace
        else:
            _, trace = train_task(problem, w0.values, items, None, toys.rate_game(), rng)
        bounds = diagnostics.check_gradient_bounds(trace)

        with OutputDir(opts.out_dir) as out:
            out.write_csv("diagnose-rates.csv", pd.DataFrame(rates))
            out.write_csv("diagnose-equilibrium.csv", pd.DataFrame(equilibrium))
            out.write_csv("diagnose-bounds.csv", pd.DataFrame([bounds._asdict()]))
            out.write_svg("rate-u.svg", plots.rate_plot(
                fit_u.grid, fit_u.minima, slope=fit_u.slope, intercept=fit_u.intercept,
                title="Ascent convergence", xlabel="zeta", ylabel="min |g_u|^2"))
            out.write_svg("rate-w.svg", plots.rate_plot(
                fit_w.grid, fit_w.minima, slope=fit_w.slope, intercept=fit_w.intercept,
                title="Descent convergence", xlabel="rho", ylabel="min |g_w|^2"))

        for name, fit in (('ascent', fit_u), ('descent', fit_w)):
            echo_check(fit.ok, "{} rate slope {:.3f} +- {:.3f}".format(name, fit.slope, fit.half_width))
        for row in equilibrium:
            echo_check(
                row['res_u'] <= row['bound_u'] and row['res_w'] <= row['bound_w'],
                "equilibrium delta={:g}: res_u={:.3g} (bound {:.3g}) res_w={:.3g} (bound {:.3g})".format(
                    row['delta'], row['res_u'], row['bound_u'], row['res_w'], row['bound_w']))
        echo_check(True, "gradient bounds over {} steps: max ratios u={:.6f} w={:.6f}".format(
            bounds.steps, bounds.u_ratio, bounds.w_ratio))


@main.command(name='hpo')
@stream_option
@click.option('--seed', type=int, default=0, show_default=True)
@out_dir_option
@click.option('--space', default=hpo.DEFAULT_SPACE, show_default=True,
              help="search space, e.g. \"nlays:int[1,4] alpha_w:log[1e-7,1e-1]\"")
@click.option('--trials', type=click.IntRange(min=1), default=20, show_default=True,
              help="random search trials")
@click.option('--quantile', type=float, default=0.3, show_default=True,
              help="fraction of lowest-FM trials the copula is fitted to")
@click.option('--samples', type=click.IntRange(min=1), default=50, show_default=True,
              help="configurations drawn from the copula and re-evaluated")
@click.option('--method', type=click.Choice(continual.METHODS), default='game', show_default=True)
@click.option('--workers', type=click.IntRange(min=1), default=1, show_default=True)
@game_options
@model_options
def hpo_command(**kwargs):
    """Random search, top quantile, Gaussian copula, resampling and re-evaluation."""
    opts = types.SimpleNamespace(**kwargs)

    with reporting_failures():
        space = hpo.HpoSpace.parse(opts.space)
        game = make_game_config(opts)
        stream = require_stream(opts)
        model = make_model_config(opts, stream)
        rng = np.random.default_rng(opts.seed)
        kw = dict(method=opts.method, workers=opts.workers)

        records = hpo.random_search(space, opts.trials, stream, model, game, rng, **kw)
        if records.interrupted:
            with OutputDir(opts.out_dir) as out:
                out.write_csv("hpo-trials.csv", hpo.trials_frame(records, space))
            stop_interrupted(len(records), "trials")

        top = hpo.top_quantile(records, opts.quantile)
        copula = hpo.copula_fit(top, space)
        configs = hpo.copula_sample(copula, opts.samples, rng, space)
        resampled = hpo.evaluate_configs(configs, stream, model, game, rng, **kw)

        with OutputDir(opts.out_dir) as out:
            out.write_csv("hpo-trials.csv", hpo.trials_frame(records, space))
            out.write_csv("hpo-top.csv", hpo.trials_frame(top, space))
            out.write_csv("hpo-resampled.csv", hpo.trials_frame(resampled, space))

            for name in space.names:
                out.write_svg("hpo-{}.svg".format(name), plots.histogram(
                    {
                        "top quantile": [r.values[name] for r in top],
                        "copula": [c[name] for c in configs],
                    },
                    title=name, xlabel=name))
            out.write_svg("hpo-fm.svg", plots.histogram(
                {
                    "search": [r.FM for r in records],
                    "copula": [r.FM for r in resampled],
                },
                title="Forgetting of searched and resampled configurations", xlabel="FM"))

        if resampled.interrupted:
            stop_interrupted(len(records) + len(resampled), "trials")

        failed = sum(1 for r in records + resampled if not np.isfinite(r.FM))
        click.echo("trials={} top={} resampled={} failed={} best FM={:.4f}".format(
            len(records), len(top), len(resampled), failed, top[0].FM))


def stop_interrupted(count, what):
    click.secho("interrupted: wrote {} finished {}".format(count, what), err=True, fg='yellow')
    sys.exit(EXIT_INTERRUPTED)


def summarize_runs(frame):
    rows = []
    for (run_id, seed, method), matrix in sorted(metrics.MetricsReport.matrices(frame).items()):
        T = matrix.num_tasks
        rows.append(dict(
            run_id=run_id, seed=seed, method=method,
            PM=metrics.pm(matrix), FM=metrics.fm(matrix) if T > 1 else float("nan"),
        ))

    runs = pd.DataFrame(rows, columns=['run_id', 'seed', 'method', 'PM', 'FM'])
    grouped = runs.groupby('method', sort=True)
    summary = pd.DataFrame({
        'runs': grouped['run_id'].count(),
        'PM_mean': grouped['PM'].mean(),
        'PM_std': grouped['PM'].std(ddof=1),
        'FM_mean': grouped['FM'].mean(),
        'FM_std': grouped['FM'].std(ddof=1),
    }).reset_index()
    return runs, summary


@main.command()
@click.argument('directory', type=PathType(file_okay=False), default='.')
def report(directory):
    """Aggregate the CSVs of earlier commands in DIRECTORY into tables and plots."""
    with reporting_failures():
        metric_files = list_csvs(directory, "metrics-")
        ablation_file = directory / "ablation.csv"
        trials_file = directory / "hpo-trials.csv"

        if not metric_files and not ablation_file.is_file() and not trials_file.is_file():
            raise click.UsageError("no gclgame results in {}".format(directory))

        with OutputDir(directory) as out:
            if metric_files:
                runs, summary = summarize_runs(pd.concat([read_csv(p) for p in metric_files], ignore_index=True))
                out.write_csv("report-runs.csv", runs)
                out.write_csv("report-summary.csv", summary)
                out.write_svg("report-fm.svg", plots.bar_chart(
                    list(summary['method']), summary['FM_mean'], summary['FM_std'],
                    title="Forgetting by method", ylabel="FM"))
                click.echo(summary.to_string(index=False))

            if ablation_file.is_file():
                ablation = diagnostics.AblationReport(read_csv(ablation_file).to_dict('records'))
                out.write_csv("report-ablation.csv", ablation.summary())
                click.echo(ablation.summary().to_string(index=False))

            if trials_file.is_file():
                trials = read_csv(trials_file)
                out.write_svg("report-hpo-fm.svg", plots.histogram(
                    {"search": trials['FM']}, title="Forgetting over search trials", xlabel="FM"))
                finite = trials[np.isfinite(trials['FM'])]
                click.echo("hpo trials={} succeeded={}".format(len(trials), len(finite)))
