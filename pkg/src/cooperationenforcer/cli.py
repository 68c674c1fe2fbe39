# %%
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from cooperationenforcer import __version__
from cooperationenforcer.calculations.game import CLASSIC_STRATEGIES
from cooperationenforcer.calculations.learning import AVERAGE_REWARD_MODES, SCENARIOS
from cooperationenforcer.processing import experiments
from cooperationenforcer.processing.config import (
    FORMATS,
    METHODS,
    ExperimentConfig,
)
from cooperationenforcer.utility.tabular import (
    dumps_csv,
    dumps_json,
    export_dataframe,
    export_json,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATED = 1
EXIT_USAGE = 2


def _strategy_spec(text: str):
    """A classic strategy name, or comma separated probabilities."""
    if ',' in text:
        try:
            return [float(x) for x in text.split(',')]
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid strategy vector '{text}'")
    return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--n', type=int, help='number of players')
    common.add_argument('--r', type=float, help='multiplication factor')
    common.add_argument('--seed', type=int, help='root seed')
    common.add_argument('--out', help='output file (directory for learn); stdout if omitted')
    common.add_argument('--format', choices=FORMATS, help='format of tabular output')
    common.add_argument('--config', help='JSON configuration file, overridden by flags')
    common.add_argument('--workers', type=int, help='size of the process pool')
    common.add_argument(
        '--log-level',
        default='WARNING',
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
        help='logging level of the messages written to stderr',
    )

    strategy_help = f"one of {list(CLASSIC_STRATEGIES)} or 2n comma separated probabilities"

    parser = argparse.ArgumentParser(
        prog='cooperationenforcer',
        description='Cooperation enforcing and collusion resistant strategies in repeated public goods games.',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='experiment', required=True)

    cloud = subparsers.add_parser('payoff-cloud', parents=[common], help='payoffs against sampled opponents')
    cloud.add_argument('--strategy', type=_strategy_spec, help=strategy_help)
    cloud.add_argument('--first-move', type=float, dest='first_move')
    cloud.add_argument('--samples', type=int)
    cloud.add_argument('--horizon', type=int, help='Cesaro horizon T')
    cloud.add_argument('--method', choices=METHODS)
    cloud.add_argument(
        '--no-reference', dest='reference_samples', action='store_const', const=False,
        help='omit the two deterministic reference samples',
    )

    region = subparsers.add_parser('region-map', parents=[common], help='classify a grid of (n, r)')
    region.add_argument('--n-min', type=int, dest='n_min')
    region.add_argument('--n-max', type=int, dest='n_max')
    region.add_argument('--r-step', type=float, dest='r_step')

    check = subparsers.add_parser('check', parents=[common], help='check a strategy for cooperation enforcement')
    check.add_argument('--strategy', type=_strategy_spec, help=strategy_help)
    check.add_argument('--first-move', type=float, dest='first_move')

    learn = subparsers.add_parser('learn', parents=[common], help='reinforcement learning scenarios')
    learn.add_argument('--scenario', choices=SCENARIOS)
    learn.add_argument('--seeds', type=int, help='number of seeds, starting at --seed')
    learn.add_argument('--leader', type=_strategy_spec, help=strategy_help)
    learn.add_argument('--horizon', type=int, help='number of stages T')
    learn.add_argument('--alpha', type=float)
    learn.add_argument('--beta', type=float)
    learn.add_argument('--epsilon-initial', type=float, dest='epsilon_initial')
    learn.add_argument('--epsilon-decay', type=float, dest='epsilon_decay')
    learn.add_argument('--epsilon-floor', type=float, dest='epsilon_floor')
    learn.add_argument('--average-reward', choices=AVERAGE_REWARD_MODES, dest='average_reward')

    subparsers.add_parser('collusion', parents=[common], help='collusion gains of all alliances')
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Combines the configuration file (if any) with the command line flags and validates the result.
    """
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {
        key: value for key, value in vars(args).items()
        if key in ExperimentConfig.field_names()
    }
    return config.with_overrides(**overrides).validate()


def _write_text(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        file.write(text)


def _write_table(df, config: ExperimentConfig) -> None:
    if config.out is None:
        text = dumps_csv(df) if config.format == 'csv' else dumps_json(df.to_dict(orient='records'))
        sys.stdout.write(text)
    else:
        export_dataframe(df, config.out, config.format)


def cmd_payoff_cloud(config: ExperimentConfig) -> int:
    game = config.game()
    focal = config.focal_strategy()
    result = experiments.check(game, focal)
    if not result['overall']:
        sys.stdout.write(dumps_json(result))
        logger.error("refusing to sample: focal strategy fails %s", [c['name'] for c in result['constraints'] if not c['satisfied']])
        return EXIT_VIOLATED
    df, summary = experiments.payoff_cloud(
        game,
        focal,
        samples=config.samples,
        seed=config.seed,
        method=config.method,
        T=config.resolved_horizon(),
        workers=config.workers,
        reference_samples=config.reference_samples,
    )
    _write_table(df, config)
    if config.out is not None:
        sys.stdout.write(dumps_json(summary))
    else:
        logger.info("payoff cloud summary: %s", summary)
    return EXIT_OK if summary['bound_holds'] else EXIT_VIOLATED


def cmd_region_map(config: ExperimentConfig) -> int:
    df = experiments.region_map(config.n_min, config.n_max, config.r_step)
    _write_table(df, config)
    return EXIT_OK


def cmd_check(config: ExperimentConfig) -> int:
    result = experiments.check(config.game(), config.focal_strategy())
    _write_text(dumps_json(result), config.out)
    return EXIT_OK if result['overall'] else EXIT_VIOLATED


def cmd_learn(config: ExperimentConfig) -> int:
    trajectories, summary = experiments.learn(
        config.scenario,
        config.game(),
        leader=config.leader_strategy(),
        cfg=config.learner_config(),
        T=config.resolved_horizon(),
        seeds=range(config.seed, config.seed + config.seeds),
        workers=config.workers,
    )
    if config.out is not None:
        directory = Path(config.out)
        for trajectory in trajectories:
            export_dataframe(
                trajectory.to_dataframe(),
                directory / f'trajectory_{config.scenario}_seed{trajectory.seed}.{config.format}',
                config.format,
            )
        export_json(summary, directory / f'summary_{config.scenario}.json')
    sys.stdout.write(dumps_json(summary))
    return EXIT_OK


def cmd_collusion(config: ExperimentConfig) -> int:
    result = experiments.collusion(config.game())
    _write_text(dumps_json(result), config.out)
    return EXIT_OK if result['resistant'] else EXIT_VIOLATED


COMMANDS = {
    'payoff-cloud': cmd_payoff_cloud,
    'region-map': cmd_region_map,
    'check': cmd_check,
    'learn': cmd_learn,
    'collusion': cmd_collusion,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the `cooperationenforcer` command.

    Returns
    -------
    int
        0 if the command succeeded and the checked property holds,
        1 if the property is violated, 2 on usage or configuration errors.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format='%(levelname)s %(name)s: %(message)s',
    )
    try:
        config = load_config(args)
    except (ValueError, OSError) as error:
        sys.stderr.write(f"cooperationenforcer {args.experiment}: {error}\n")
        return EXIT_USAGE
    logger.debug("configuration: %s", config.to_dict())
    try:
        return COMMANDS[args.experiment](config)
    except ValueError as error:
        sys.stderr.write(f"cooperationenforcer {args.experiment}: {error}\n")
        return EXIT_USAGE


if __name__ == '__main__':
    raise SystemExit(main())
