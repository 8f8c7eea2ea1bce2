import argparse
import os
import sys

import yaml

from commands import (
    cmd_instantiate, cmd_learn, cmd_pipeline, cmd_render, cmd_sample, cmd_stats, cmd_validate,
    pipeline_config_from_doc,
)
from config import Config
from constants import Emojis
from errors import SceneSynthError, UsageError, ValidationError
from gtrender import CHANNELS
from logger import logger, set_level

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; usage errors here are exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _channels(value: str):
    chosen = tuple(c.strip() for c in value.split(",") if c.strip())
    unknown = [c for c in chosen if c not in CHANNELS]
    if unknown or not chosen:
        raise argparse.ArgumentTypeError(f"channels must be a subset of {','.join(CHANNELS)}")
    return chosen


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sago", description="Learn an indoor-scene grammar, sample layouts and render ground truth.")
    parser.add_argument('--seed', type=int, default=None, help='Base seed (default: system.seed in config.yaml)')
    parser.add_argument('--jobs', type=int, default=None, help='Worker threads for chains / learning / rendering')
    parser.add_argument('--config', type=str, default=None, help='Run config (JSON or YAML) overlaid on config.yaml')
    parser.add_argument('--log-level', type=str, default=None, help='Override SAGO_LOG for this run (DEBUG, INFO, WARNING, ERROR)')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    p = sub.add_parser('learn', help='Estimate a grammar bundle from training scenes')
    p.add_argument('grammar', help='Grammar skeleton JSON')
    p.add_argument('scenes', help='Training scenes JSON')
    p.add_argument('--out', required=True, help='Bundle output path')
    p.add_argument('--iterations', type=int, default=None, help='Contrastive-divergence iterations')

    p = sub.add_parser('sample', help='Run MCMC chains over a learned bundle')
    p.add_argument('bundle')
    p.add_argument('--out', required=True, help='Output directory for parse-graph files')
    p.add_argument('--chains', '-n', dest='chains', type=int, default=1)
    p.add_argument('--beta', type=float, default=None)
    p.add_argument('--iters', type=int, default=None)
    p.add_argument('--staged', dest='staged', action='store_true', default=None)
    p.add_argument('--no-staged', dest='staged', action='store_false')
    p.add_argument('--trace', default=None, help='JSON-lines chain trace output')

    p = sub.add_parser('instantiate', help='Turn parse graphs into catalog layouts')
    p.add_argument('parse_graphs', nargs='+')
    p.add_argument('--catalog', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--obj', action='store_true', help='Also export box-proxy OBJ files')

    p = sub.add_parser('render', help='Ray-cast ground-truth frames for layouts')
    p.add_argument('layouts', nargs='+')
    p.add_argument('--out', required=True)
    p.add_argument('--camera', default=None, help='Camera spec JSON (default: cameras stored in the layout)')
    p.add_argument('--channels', type=_channels, default=CHANNELS)

    p = sub.add_parser('pipeline', help='learn -> sample -> instantiate -> render with a manifest')
    p.add_argument('--n', type=int, default=None, help='Scene count (overrides the run config)')
    p.add_argument('--out', default=None, help='Output directory (overrides the run config)')

    p = sub.add_parser('validate', help='Schema and invariant checks for any file kind')
    p.add_argument('file')

    p = sub.add_parser('stats', help='Summary tables for training scenes or a bundle')
    p.add_argument('file')
    p.add_argument('--grammar', default=None, help='Skeleton for unknown-category counts')
    return parser


def _load_run_config(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            doc = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ValidationError(f"{path}: cannot parse run config ({e})")
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: run config must be a mapping")
    Config.overlay({k: v for k, v in doc.items() if k != 'pipeline'})
    return doc


def run(args) -> int:
    run_doc = _load_run_config(args.config)

    if args.command == 'learn':
        cmd_learn(args.grammar, args.scenes, args.out, seed=args.seed, jobs=args.jobs, iterations=args.iterations)
    elif args.command == 'sample':
        cmd_sample(args.bundle, args.out, n=args.chains, seed=args.seed, jobs=args.jobs, beta=args.beta,
                   iters=args.iters, staged=args.staged, trace_path=args.trace)
    elif args.command == 'instantiate':
        cmd_instantiate(args.parse_graphs, args.catalog, args.out, seed=args.seed, obj=args.obj)
    elif args.command == 'render':
        cmd_render(args.layouts, args.out, camera_path=args.camera, channels=args.channels, jobs=args.jobs)
    elif args.command == 'pipeline':
        if args.config is None:
            raise UsageError("pipeline needs --config with a 'pipeline' section")
        pcfg = pipeline_config_from_doc(run_doc)
        if args.n is not None:
            pcfg.n = args.n
        if args.out is not None:
            pcfg.output_dir = args.out
        cmd_pipeline(pcfg, seed=args.seed, jobs=args.jobs)
    elif args.command == 'validate':
        _, findings = cmd_validate(args.file)
        if findings:
            return EXIT_INVALID
    elif args.command == 'stats':
        cmd_stats(args.file, grammar_path=args.grammar)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        set_level(args.log_level)
    try:
        return run(args)
    except UsageError as e:
        logger.error(f"{Emojis.FAIL} {e}")
        return EXIT_USAGE
    except ValidationError as e:
        logger.error(f"{Emojis.FAIL} {e}")
        for finding in e.findings:
            logger.error(f"   - {finding}")
        return EXIT_INVALID
    except (SceneSynthError, OSError) as e:
        logger.error(f"{Emojis.FAIL} {type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
