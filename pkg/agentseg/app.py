# -*- coding: utf-8 -*-

"""
PyAgentSeg
----------

Command line: ``agentseg fit|segment|evaluate|rdp|analyze|synth``.

Every command reads its inputs, calls the library with explicit
configuration objects and writes its outputs; flag defaults come from the
user configuration (:mod:`agentseg.config`).
"""

from __future__ import annotations

import argparse
import datetime
import os
import os.path as osp
import shutil
import sys
import traceback

import numpy as np

from agentseg import __version__, analytics, drawing, fileio
from agentseg.config import APP_DESC, APP_NAME, DATETIME_FORMAT, DEBUG, Conf
from agentseg.config import get_old_log_fname
from agentseg.core import Segmentation, validate_model
from agentseg.em import EmConfig, EstepVariant, fit
from agentseg.errors import AgentSegError, FileFormatError, ValidationError
from agentseg.hmm import HmmConfig, segment, train_hmm
from agentseg.metrics import (
    AgentSegmenter,
    RdpSegmenter,
    cross_validate,
    evaluate,
)
from agentseg.rdp import RdpParams, default_grid, rdp_simplify, select_epsilon
from agentseg.synth import lane_agents, sample_corpus, sample_switching_corpus
from agentseg.utils.loghelper import LOG, level_from_debug
from agentseg.utils.misc import parallel_map


def positive_int(text: str) -> int:
    """argparse type: integer >= 1"""
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def non_negative_int(text: str) -> int:
    """argparse type: integer >= 0"""
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from exc
    if value < 0:
        raise argparse.ArgumentTypeError(
            f"expected a non-negative integer, got {value}"
        )
    return value


def positive_float(text: str) -> float:
    """argparse type: real > 0"""
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from exc
    if not value > 0.0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def non_negative_float(text: str) -> float:
    """argparse type: real >= 0"""
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from exc
    if not value >= 0.0:
        raise argparse.ArgumentTypeError(
            f"expected a non-negative number, got {value}"
        )
    return value


def _stem(fname: str) -> str:
    return osp.splitext(fname)[0]


# ---- Flags shared by several commands ---------------------------------------
def _add_em_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("agent estimation")
    group.add_argument(
        "--agents", type=positive_int, default=1, help="number of agents M"
    )
    group.add_argument(
        "--variant",
        choices=[item.value for item in EstepVariant],
        default=Conf.em.variant.get(),
        help="E-step variant",
    )
    group.add_argument(
        "--tmax",
        type=non_negative_int,
        default=Conf.em.t_cap.get(),
        help="largest padding length",
    )
    group.add_argument(
        "--max-iters",
        type=positive_int,
        default=Conf.em.max_iters.get(),
        help="maximum number of EM iterations",
    )
    group.add_argument(
        "--tol",
        type=positive_float,
        default=Conf.em.loglik_tol.get(),
        help="log-likelihood improvement below which EM stops",
    )
    group.add_argument(
        "--seed", type=int, default=Conf.em.seed.get(), help="random seed"
    )


def _add_hmm_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("segmentation")
    group.add_argument(
        "--window",
        type=positive_int,
        default=Conf.hmm.window.get(),
        help="number of smoothed states per window",
    )
    group.add_argument(
        "--overlap",
        action="store_true",
        default=bool(Conf.hmm.overlap.get()),
        help="use overlapping windows",
    )


def _em_config(args) -> EmConfig:
    return EmConfig(
        num_agents=args.agents,
        t_cap=args.tmax,
        max_iters=args.max_iters,
        loglik_tol=args.tol,
        estep_variant=args.variant,
        rng_seed=args.seed,
    )


def _hmm_config(args) -> HmmConfig:
    return HmmConfig(
        window=args.window,
        overlap=args.overlap,
        max_iters=Conf.hmm.max_iters.get(),
        tol=Conf.hmm.tol.get(),
        self_prob=Conf.hmm.self_prob.get(),
    )


def _grid_spec(args, rows: int, cols: int) -> analytics.GridSpec:
    return analytics.GridSpec(rows, cols, args.width, args.height)


def _read_model(fname: str) -> fileio.ModelFile:
    content = fileio.ModelFile.from_filename(fname)
    violations = validate_model(content.model)
    if violations:
        raise FileFormatError(f"{fname}: " + "; ".join(violations))
    return content


# ---- Commands ---------------------------------------------------------------
def cmd_fit(args):
    """Fit agents and the transition matrix"""
    trajs = fileio.read_trajectories(args.trajectories)
    cfg = _em_config(args)
    result = fit(trajs, cfg)
    hmm = train_hmm(trajs, result, _hmm_config(args))
    fileio.ModelFile(result.model, hmm, cfg).to_filename(args.output)
    trace_fname = args.trace or _stem(args.output) + "_trace.csv"
    fileio.write_trace(trace_fname, result.trace, cfg.estep_variant.value)
    state = "converged" if result.converged else "stopped"
    print(
        f"{cfg.num_agents} agents, {result.n_iter} iterations ({state}), "
        f"log-likelihood {result.trace[-1]:.6f}"
    )


def cmd_segment(args):
    """Segment trajectories with a fitted model"""
    content = _read_model(args.model)
    if content.hmm is None:
        raise FileFormatError(f"{args.model}: model file has no transition matrix")
    em_config = content.em_config or EmConfig(num_agents=content.model.num_agents)
    trajs = fileio.read_trajectories(args.trajectories)

    def run_one(traj):
        if traj.n_points < args.window:
            LOG.warning(
                f"trajectory {traj.id!r}: {traj.n_points} points, shorter than "
                f"the window ({args.window}), left unsegmented"
            )
            return Segmentation.from_labels(traj.id, np.zeros(traj.n_points, int))
        return segment(
            traj,
            content.model,
            content.hmm,
            window=args.window,
            overlap=args.overlap,
            em_config=em_config,
        )

    segs = parallel_map(run_one, trajs)
    fileio.write_segmentations(args.output, segs)
    n_splits = sum(seg.n_splits for seg in segs)
    print(f"{len(segs)} trajectories, {n_splits} segmentation points")


def _print_summary(table):
    for row in table.itertuples(index=False):
        print(
            f"{row.method:<22} {row.parameter_mean:8.2f} ± {row.parameter_std:<7.2f}"
            f" E_pos {row.e_pos_mean:8.3f} ± {row.e_pos_std:<7.3f}"
            f" E_step {row.e_step_mean:6.3f} ± {row.e_step_std:.3f}"
        )


def cmd_evaluate(args):
    """Evaluate a segmentation file or cross-validate methods"""
    trajs = fileio.read_trajectories(args.trajectories)
    truths = fileio.read_ground_truth(args.ground_truth, trajs)
    if args.segmentations:
        segs = fileio.align_segmentations(
            fileio.read_segmentations(args.segmentations), trajs
        )
        report = evaluate(trajs, segs, truths)
        fileio.write_table(args.output, fileio.error_report_table(report, args.label))
        fileio.write_table(
            _stem(args.output) + "_trajectories.csv",
            fileio.per_trajectory_table(report),
        )
        print(
            f"E_pos {report.e_pos:.3f}, E_step {report.e_step:.3f} "
            f"({report.n_evaluated} evaluated, {len(report.skipped)} skipped)"
        )
        return
    cv_reports = []
    for method in args.method:
        if method == "agents":
            em_config, hmm_config = _em_config(args), _hmm_config(args)

            def factory(em_config=em_config, hmm_config=hmm_config):
                return AgentSegmenter(em_config, hmm_config)

        else:
            grid = default_grid(
                Conf.rdp.eps_min.get(), Conf.rdp.eps_max.get(), Conf.rdp.eps_count.get()
            )

            def factory(grid=grid):
                return RdpSegmenter(grid, args.criterion)

        cv_reports.append(
            cross_validate(trajs, truths, factory, folds=args.folds, seed=args.seed)
        )
    summary = fileio.summary_table(cv_reports)
    fileio.write_table(args.output, summary)
    folds_fname = _stem(args.output) + "_folds.csv"
    fileio.write_table(folds_fname, fileio.folds_table(cv_reports))
    _print_summary(summary)


def cmd_rdp(args):
    """Segment trajectories with RDP"""
    trajs = fileio.read_trajectories(args.trajectories)
    if args.epsilon is not None:
        epsilon = args.epsilon
    else:
        if not args.ground_truth:
            raise ValidationError("--select-grid needs --ground-truth")
        truths = fileio.read_ground_truth(args.ground_truth, trajs)
        grid = default_grid(args.eps_min, args.eps_max, args.eps_count)
        epsilon = select_epsilon(trajs, truths, grid, args.criterion)
    params = RdpParams(epsilon)
    segs = []
    for traj in trajs:
        mask = rdp_simplify(traj, params)
        segs.append(Segmentation.from_labels(traj.id, np.cumsum(mask)))
    fileio.write_segmentations(args.output, segs)
    n_splits = sum(seg.n_splits for seg in segs)
    print(f"epsilon {epsilon:g}: {n_splits} segmentation points")


def cmd_analyze(args):
    """Write transition, occurrence and density artifacts"""
    content = _read_model(args.model)
    if content.hmm is None:
        raise FileFormatError(f"{args.model}: model file has no transition matrix")
    trajs = fileio.read_trajectories(args.trajectories)
    segs = fileio.align_segmentations(
        fileio.read_segmentations(args.segmentations), trajs
    )
    outdir = args.output
    os.makedirs(outdir, exist_ok=True)
    n_agents = content.model.num_agents

    tables = analytics.transition_tables(content.hmm)
    fileio.write_grid(osp.join(outdir, "transitions.csv"), tables.matrix)
    fileio.write_grid(osp.join(outdir, "transitions_normalized.csv"), tables.normalized)
    edges = analytics.transition_graph(tables.normalized, args.threshold)
    fileio.write_edges(osp.join(outdir, "transition_graph.csv"), edges)
    drawing.save_transition_graph_svg(
        osp.join(outdir, "transition_graph.svg"), edges, n_agents
    )

    layout = _grid_spec(args, args.rows, args.cols)
    occurrence = analytics.occurrence_map(segs, trajs, layout)
    fileio.write_grid(osp.join(outdir, "occurrence.csv"), occurrence.counts)
    drawing.save_heatmap_svg(osp.join(outdir, "occurrence.svg"), occurrence.counts)
    drawing.save_heatmap_png(
        osp.join(outdir, "occurrence.png"),
        occurrence.counts,
        extent=(layout.width, layout.height),
        title="Agent occurrence",
    )

    density_spec = _grid_spec(args, args.resolution, args.resolution)
    for agent in range(n_agents):
        points = analytics.agent_points(segs, trajs, agent)
        if points.shape[0] == 0:
            LOG.warning(f"agent {agent} labels no point: no density map")
            continue
        density = analytics.density_map(points, density_spec)
        fileio.write_grid(osp.join(outdir, f"density_{agent}.csv"), density.values)
        drawing.save_heatmap_png(
            osp.join(outdir, f"density_{agent}.png"),
            density.values,
            extent=(layout.width, layout.height),
            title=f"Agent {agent}",
        )
    print(f"{len(edges)} transition edges above {args.threshold:g}")


def cmd_synth(args):
    """Sample trajectories from a model file or a lane scene"""
    if args.agents_file:
        model = _read_model(args.agents_file).model
    else:
        model = lane_agents(args.lanes, reversion=args.reversion, length=args.points)
    if args.switching:
        samples = sample_switching_corpus(
            model,
            args.count,
            n_points=args.points,
            n_switches=args.switches,
            min_gap=args.min_gap,
            seed=args.seed,
        )
        trajs = [sample.trajectory for sample in samples]
        masks = [sample.split_mask for sample in samples]
        segs = [sample.segmentation for sample in samples]
    else:
        samples = sample_corpus(
            model,
            args.count,
            n_points=args.points,
            seed=args.seed,
            rejection=args.rejection,
        )
        trajs = [sample.trajectory for sample in samples]
        masks = [np.zeros(traj.n_points, dtype=bool) for traj in trajs]
        segs = [
            Segmentation.from_labels(
                sample.trajectory.id,
                np.full(sample.trajectory.n_points, sample.hidden.z),
            )
            for sample in samples
        ]
    fileio.write_trajectories(args.output, trajs)
    if args.ground_truth:
        fileio.write_ground_truth(args.ground_truth, trajs, masks)
    if args.labels:
        fileio.write_segmentations(args.labels, segs)
    print(f"{len(trajs)} trajectories written to {args.output}")


# ---- Parser -----------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    """Return the command line parser"""
    parser = argparse.ArgumentParser(prog="agentseg", description=APP_DESC)
    parser.add_argument(
        "--version", action="version", version=f"{APP_NAME} {__version__}"
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="log progress (-vv: debug messages)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    sub = subparsers.add_parser("fit", help="fit agents and transitions")
    sub.add_argument("trajectories", help="trajectory file")
    sub.add_argument("-o", "--output", required=True, help="model file")
    sub.add_argument("--trace", help="log-likelihood trace file")
    _add_em_flags(sub)
    _add_hmm_flags(sub)
    sub.set_defaults(func=cmd_fit)

    sub = subparsers.add_parser("segment", help="segment trajectories")
    sub.add_argument("model", help="model file")
    sub.add_argument("trajectories", help="trajectory file")
    sub.add_argument("-o", "--output", required=True, help="segmentation file")
    _add_hmm_flags(sub)
    sub.set_defaults(func=cmd_segment)

    sub = subparsers.add_parser("evaluate", help="evaluate segmentations")
    sub.add_argument("trajectories", help="trajectory file")
    sub.add_argument("ground_truth", help="ground-truth file")
    sub.add_argument("-o", "--output", required=True, help="report file")
    sub.add_argument(
        "--segmentations", help="segmentation file (default: cross-validation)"
    )
    sub.add_argument(
        "--label", default="segmentation", help="method name of --segmentations"
    )
    sub.add_argument(
        "--method",
        nargs="+",
        choices=["agents", "rdp"],
        default=["agents", "rdp"],
        help="cross-validated methods",
    )
    sub.add_argument("--folds", type=positive_int, default=10, help="fold count")
    sub.add_argument(
        "--criterion",
        choices=["positional", "step"],
        default="positional",
        help="epsilon selection criterion",
    )
    _add_em_flags(sub)
    _add_hmm_flags(sub)
    sub.set_defaults(func=cmd_evaluate)

    sub = subparsers.add_parser("rdp", help="segment trajectories with RDP")
    sub.add_argument("trajectories", help="trajectory file")
    sub.add_argument("-o", "--output", required=True, help="segmentation file")
    choice = sub.add_mutually_exclusive_group(required=True)
    choice.add_argument("--epsilon", type=positive_float, help="threshold (pixels)")
    choice.add_argument(
        "--select-grid",
        action="store_true",
        help="select epsilon on a log-spaced grid",
    )
    sub.add_argument("--ground-truth", help="ground truth used by --select-grid")
    sub.add_argument(
        "--criterion", choices=["positional", "step"], default="positional"
    )
    sub.add_argument("--eps-min", type=positive_float, default=Conf.rdp.eps_min.get())
    sub.add_argument("--eps-max", type=positive_float, default=Conf.rdp.eps_max.get())
    sub.add_argument(
        "--eps-count", type=positive_int, default=Conf.rdp.eps_count.get()
    )
    sub.set_defaults(func=cmd_rdp)

    sub = subparsers.add_parser("analyze", help="behavior analysis artifacts")
    sub.add_argument("model", help="model file")
    sub.add_argument("trajectories", help="trajectory file")
    sub.add_argument("segmentations", help="segmentation file")
    sub.add_argument("-o", "--output", required=True, help="output directory")
    sub.add_argument("--rows", type=positive_int, default=Conf.analytics.rows.get())
    sub.add_argument("--cols", type=positive_int, default=Conf.analytics.cols.get())
    sub.add_argument(
        "--width", type=positive_float, default=Conf.analytics.scene_width.get()
    )
    sub.add_argument(
        "--height", type=positive_float, default=Conf.analytics.scene_height.get()
    )
    sub.add_argument(
        "--threshold", type=float, default=Conf.analytics.threshold.get()
    )
    sub.add_argument(
        "--resolution",
        type=positive_int,
        default=Conf.analytics.density_resolution.get(),
        help="density grid rows and columns",
    )
    sub.set_defaults(func=cmd_analyze)

    sub = subparsers.add_parser("synth", help="sample synthetic trajectories")
    source = sub.add_mutually_exclusive_group(required=True)
    source.add_argument("--agents-file", help="model file")
    source.add_argument(
        "--lanes", type=positive_int, help="lane-keeping agents instead of a file"
    )
    sub.add_argument(
        "--reversion",
        type=non_negative_float,
        default=0.1,
        help="lane-keeping rate of --lanes agents",
    )
    sub.add_argument("-o", "--output", required=True, help="trajectory file")
    sub.add_argument("--ground-truth", help="ground-truth sidecar file")
    sub.add_argument("--labels", help="generator labels as a segmentation file")
    sub.add_argument("--count", type=positive_int, default=100)
    sub.add_argument("--points", type=positive_int, default=20)
    sub.add_argument("--switching", action="store_true", help="switch agents")
    sub.add_argument("--switches", type=non_negative_int, default=1)
    sub.add_argument("--min-gap", type=positive_int, default=6)
    sub.add_argument(
        "--rejection", action="store_true", help="end states near the end belief"
    )
    sub.add_argument("--seed", type=int, default=Conf.em.seed.get())
    sub.set_defaults(func=cmd_synth)
    return parser


def write_traceback_log(fname: str):
    """Write the current exception traceback, keeping the previous log"""
    if osp.isfile(fname):
        try:
            shutil.move(fname, get_old_log_fname(fname))
        except OSError:
            pass
    stamp = datetime.datetime.now().strftime(DATETIME_FORMAT)
    with open(fname, "w", encoding="utf-8") as fdesc:
        fdesc.write(f"[{stamp}] CRITICAL - Unhandled exception\n")
        traceback.print_exc(file=fdesc)


def run(argv=None) -> int:
    """Run PyAgentSeg command line, return exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)
    level = level_from_debug(max(args.verbose, DEBUG))
    if level is not None:
        LOG.initialize(level)
    try:
        args.func(args)
    except AgentSegError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception:  # pylint: disable=broad-except
        fname = Conf.main.traceback_log_path.get()
        write_traceback_log(fname)
        print(f"error[internal]: unexpected error (see {fname})", file=sys.stderr)
        return 1
    finally:
        LOG.close()
    return 0


if __name__ == "__main__":
    sys.exit(run())
