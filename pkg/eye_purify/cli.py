"""Command line: purify, optimize, train, repair masks, benchmark and evaluate.

Every option can also come from a flat `key = value` run configuration
file passed with --config; keys are the long option names with dashes
replaced by underscores. A flag on the command line beats the file, and
the file beats the built-in default.
"""

import argparse
import logging
import os
import shutil
import sys
import time

from eye_purify import __version__, constants, exceptions, settings
from eye_purify.files import atomic_path, write_csv
from eye_purify.image_io import CODECS_BY_EXTENSION, read_image, resize_bilinear, write_image
from eye_purify.loss_network import LossConfig, PurificationObjective, build_loss_net
from eye_purify.masks import encode_mask, is_orphan, mask_path_for, read_mask, repair_orphans, resize_mask


logger = logging.getLogger(__name__)


# -- run configuration --

def read_config_file(path):
    """Parse `key = value` lines; blank lines and lines starting with # are ignored."""
    try:
        with open(path) as fp:
            lines = fp.read().splitlines()
    except (IOError, OSError) as e:
        raise exceptions.ConfigurationError("could not read config file {}: {}".format(path, e))
    values = {}
    for number, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        key, sep, value = line.partition('=')
        if not sep or not key.strip():
            raise exceptions.ConfigurationError("{}:{}: expected 'key = value'".format(path, number))
        values[key.strip().replace('-', '_')] = value.strip()
    return values


def _option_name(parser, dest):
    for action in parser._actions:
        if action.dest == dest and action.option_strings:
            return action.option_strings[-1].lstrip('-')
    return dest.replace('_', '-')


class RunConfig(object):
    """Resolved options of one command; values[key] with sources[key] in {'flag', 'file', 'default'}."""

    def __init__(self, command, values, sources):
        self.command = command
        self.values = values
        self.sources = sources

    def __getattr__(self, key):
        try:
            return self.__dict__['values'][key]
        except KeyError:
            raise AttributeError(key)

    @staticmethod
    def _option_keys(parser):
        """Config key -> action; both the long option name and the destination are accepted."""
        keys = {}
        for action in parser._actions:
            if action.dest in NON_CONFIG_KEYS:
                continue
            keys[action.dest] = action
            for option in action.option_strings:
                if option.startswith('--'):
                    keys[option[2:].replace('-', '_')] = action
        return keys

    @classmethod
    def resolve(cls, command, args, parser, defaults, required=()):
        keys = cls._option_keys(parser)
        from_file = read_config_file(args.config) if getattr(args, 'config', None) else {}
        unknown = sorted(set(from_file) - set(keys))
        if unknown:
            raise exceptions.ConfigurationError("unknown config keys for '{}': {}".format(command, ', '.join(unknown)))
        file_values = {}
        for key, raw in from_file.items():
            action = keys[key]
            try:
                value = action.type(raw) if action.type else raw
            except (ValueError, argparse.ArgumentTypeError) as e:
                raise exceptions.UsageError("config key '{}': {}".format(key, e))
            if action.choices is not None and value not in action.choices:
                raise exceptions.UsageError("config key '{}': '{}' is not one of {}".format(
                    key, value, ', '.join(action.choices)))
            file_values[action.dest] = value

        values, sources = {}, {}
        for dest in set(a.dest for a in keys.values()):
            flag = getattr(args, dest, None)
            if flag is not None:
                values[dest], sources[dest] = flag, 'flag'
            elif dest in file_values:
                values[dest], sources[dest] = file_values[dest], 'file'
            else:
                values[dest], sources[dest] = defaults.get(dest), 'default'
        missing = [key for key in required if values.get(key) is None]
        if missing:
            raise exceptions.UsageError("{}: missing required option(s) {}".format(
                command, ', '.join('--' + _option_name(parser, k) for k in missing)))
        return cls(command, values, sources)

    def log(self):
        logger.info("%s configuration:", self.command)
        for key in sorted(self.values):
            logger.info("%s = %s", key, self.values[key])


NON_CONFIG_KEYS = ('help', 'config', 'verbose', 'command', 'metric', 'version')


def _defaults():
    return {
        'iters': settings.LBFGS_ITERATIONS,
        'seed': settings.SEED,
        'loss_preset': settings.LOSS_PRESET,
        'loss_net_seed': settings.SEED,
        'batch': settings.TRAIN_BATCH_SIZE,
        'lr': settings.TRAIN_LEARNING_RATE,
        'train_iters': settings.TRAIN_ITERATIONS,
        'image_size': settings.TRAIN_IMAGE_SIZE,
        'log_every': settings.TRAIN_LOG_EVERY,
        'preset': settings.TRANSFORM_PRESET,
        'sizes': settings.BENCH_SIZES,
        'lbfgs_iters': settings.BENCH_LBFGS_ITERATIONS,
        'repeats': settings.BENCH_REPEATS,
        'csv': None,
    }


# -- argument parsing --

class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting."""

    def error(self, message):
        raise exceptions.UsageError("{}: {}".format(self.prog, message))


def size_list(text):
    try:
        sizes = tuple(int(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated sizes, got '{}'".format(text))
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("expected positive sizes, got '{}'".format(text))
    return sizes


def _add_loss_options(parser):
    group = parser.add_argument_group('loss')
    group.add_argument('--loss-preset', choices=constants.LOSS_PRESETS)
    group.add_argument('--content-weight', type=float)
    group.add_argument('--style-weight', type=float)
    group.add_argument('--lambda-global', type=float)
    group.add_argument('--lambda-local', type=float)
    group.add_argument('--tv-weight', type=float)
    group.add_argument('--gram-normalization', choices=(constants.GRAM_RAW, constants.GRAM_BY_ELEMENTS))
    group.add_argument('--loss-net', help='loss network weights file (default: seeded weights)')
    group.add_argument('--loss-net-seed', type=int)


COMMANDS = {}
REQUIRED = {}


def command(name, required=()):
    def register(fn):
        COMMANDS[name] = fn
        REQUIRED[name] = required
        return fn
    return register


def build_parser():
    parser = ArgumentParser(prog='eye_purify', description="Purify real eye images toward a synthetic style.")
    parser.add_argument('--version', action='version', version=__version__)
    common = ArgumentParser(add_help=False)
    common.add_argument('--config', help='run configuration file of key = value lines')
    common.add_argument('--verbose', action='store_true')

    subparsers = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    parsers = {}

    p = subparsers.add_parser('stylize', parents=[common], help='purify one image with a trained model')
    p.add_argument('--model')
    p.add_argument('--input')
    p.add_argument('--output')
    p.add_argument('--size', type=int)
    parsers['stylize'] = p

    p = subparsers.add_parser('optimize', parents=[common], help='projected L-BFGS from white noise')
    p.add_argument('--content')
    p.add_argument('--style')
    p.add_argument('--content-mask')
    p.add_argument('--style-mask')
    p.add_argument('--iters', type=int)
    p.add_argument('--out')
    p.add_argument('--curve-csv')
    p.add_argument('--size', type=int)
    p.add_argument('--seed', type=int)
    _add_loss_options(p)
    parsers['optimize'] = p

    p = subparsers.add_parser('train', parents=[common], help='train a transform network with Adam')
    p.add_argument('--corpus')
    p.add_argument('--style')
    p.add_argument('--style-mask')
    p.add_argument('--out-model')
    p.add_argument('--curve-csv')
    p.add_argument('--iters', dest='train_iters', type=int)
    p.add_argument('--batch', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--seed', type=int)
    p.add_argument('--size', dest='image_size', type=int)
    p.add_argument('--log-every', type=int)
    p.add_argument('--preset', choices=constants.TRANSFORM_PRESETS)
    _add_loss_options(p)
    parsers['train'] = p

    p = subparsers.add_parser('repair-masks', parents=[common], help='repair orphan pupil labels')
    p.add_argument('--in', dest='in_dir')
    p.add_argument('--out', dest='out_dir')
    parsers['repair-masks'] = p

    p = subparsers.add_parser('bench', parents=[common], help='feed-forward vs L-BFGS wall clock')
    p.add_argument('--model')
    p.add_argument('--sizes', type=size_list)
    p.add_argument('--lbfgs-iters', type=int)
    p.add_argument('--repeats', type=int)
    p.add_argument('--csv')
    p.add_argument('--seed', type=int)
    _add_loss_options(p)
    parsers['bench'] = p

    p = subparsers.add_parser('metrics', help='evaluation metrics')
    metrics = p.add_subparsers(dest='metric', parser_class=ArgumentParser)
    m = metrics.add_parser('pupil-center', parents=[common], help='pupil center distance between mask sets')
    m.add_argument('--a')
    m.add_argument('--b')
    m.add_argument('--csv')
    parsers['metrics pupil-center'] = m

    p = subparsers.add_parser('parity', parents=[common], help='feed-forward objective vs L-BFGS curve')
    p.add_argument('--model')
    p.add_argument('--content-dir')
    p.add_argument('--style')
    p.add_argument('--style-mask')
    p.add_argument('--iters', type=int)
    p.add_argument('--size', type=int)
    p.add_argument('--csv')
    p.add_argument('--seed', type=int)
    _add_loss_options(p)
    parsers['parity'] = p

    return parser, parsers


# -- shared helpers --

def _loss_config(cfg):
    return LossConfig.from_preset(
        cfg.loss_preset, content_weight=cfg.content_weight, style_weight=cfg.style_weight,
        lambda_global=cfg.lambda_global, lambda_local=cfg.lambda_local, tv_weight=cfg.tv_weight,
        gram_normalization=cfg.gram_normalization)


def _loss_net(cfg):
    return build_loss_net(seed=cfg.loss_net_seed, source=cfg.loss_net)


def _image_and_mask(image_path, mask_path, need_mask, size=None):
    """Read an image and, if needed, its repaired mask (default path: name.mask.ext)."""
    image = read_image(image_path)
    mask = None
    if need_mask:
        mask = repair_orphans(read_mask(mask_path or mask_path_for(image_path), expected_shape=image.shape[:2]))
    if size:
        image = resize_bilinear(image, size, size)
        mask = resize_mask(mask, size, size) if mask is not None else None
    return image, mask


def _mask_files(directory):
    return sorted(name for name in os.listdir(directory)
                  if os.path.splitext(name)[1].lower() in CODECS_BY_EXTENSION)


# -- commands --

@command('stylize', required=('model', 'input', 'output'))
def cmd_stylize(cfg):
    from eye_purify.transform_net import load_model
    net = load_model(cfg.model)
    image = read_image(cfg.input)
    if cfg.size:
        image = resize_bilinear(image, cfg.size, cfg.size)
    started = time.perf_counter()
    output = net.stylize(image)
    elapsed = time.perf_counter() - started
    write_image(output, cfg.output)
    print("stylized {} ({}x{}) in {:.3f}s".format(cfg.input, image.shape[1], image.shape[0], elapsed))
    return constants.EXIT_OK


@command('optimize', required=('content', 'style', 'out'))
def cmd_optimize(cfg):
    from eye_purify.optimizers import projected_lbfgs, white_noise_image
    loss_config = _loss_config(cfg)
    need_masks = bool(loss_config.local_layers())
    content, content_mask = _image_and_mask(cfg.content, cfg.content_mask, need_masks, cfg.size)
    style, style_mask = _image_and_mask(cfg.style, cfg.style_mask, need_masks, cfg.size)
    objective = PurificationObjective(_loss_net(cfg), loss_config, style, style_mask, content, content_mask)
    init = white_noise_image(content.shape[0], content.shape[1], cfg.seed)
    result, reports = projected_lbfgs(objective, init, max_iter=cfg.iters)
    write_image(result, cfg.out)
    if cfg.curve_csv:
        write_csv(cfg.curve_csv, constants.LOSS_CURVE_HEADER, [r.as_row() for r in reports])
    print("optimized {} in {} iterations, objective {:.6g}".format(cfg.out, len(reports) - 1, reports[-1].objective))
    return constants.EXIT_OK


@command('train', required=('corpus', 'style', 'out_model'))
def cmd_train(cfg):
    from eye_purify.optimizers import TrainConfig, train_transform
    loss_config = _loss_config(cfg)
    train_config = TrainConfig(batch_size=cfg.batch, iterations=cfg.train_iters, learning_rate=cfg.lr,
                               seed=cfg.seed, image_size=cfg.image_size, loss_config=loss_config,
                               log_every=cfg.log_every, preset=cfg.preset)
    style, style_mask = _image_and_mask(cfg.style, cfg.style_mask, bool(loss_config.local_layers()))
    curve_csv = cfg.curve_csv or os.path.splitext(cfg.out_model)[0] + '.loss.csv'
    _, curve = train_transform(cfg.corpus, style, style_mask, train_config, _loss_net(cfg),
                               out=cfg.out_model, curve_path=curve_csv)
    print("trained {} for {} iterations, loss {:.6g} -> {:.6g}".format(
        cfg.out_model, train_config.iterations, curve[0][1], curve[-1][1]))
    return constants.EXIT_OK


@command('repair-masks', required=('in_dir', 'out_dir'))
def cmd_repair_masks(cfg):
    if not os.path.isdir(cfg.in_dir):
        raise exceptions.ImageIOError("not a directory", path=cfg.in_dir)
    os.makedirs(cfg.out_dir, exist_ok=True)
    processed = fixed = 0
    for name in _mask_files(cfg.in_dir):
        source, target = os.path.join(cfg.in_dir, name), os.path.join(cfg.out_dir, name)
        mask = read_mask(source)
        try:
            repaired = repair_orphans(mask)
        except exceptions.MaskError as e:
            exceptions.MaskError(e.message, path=source).err_continue_msg()
            continue
        processed += 1
        if repaired is mask:
            with atomic_path(target) as tmp:
                shutil.copyfile(source, tmp)
            continue
        if is_orphan(mask):
            fixed += 1
        write_image(encode_mask(repaired), target)
    print("processed {} masks, fixed {} orphan labels".format(processed, fixed))
    return constants.EXIT_OK


@command('bench', required=('model',))
def cmd_bench(cfg):
    from eye_purify.metrics import bench, render_table, write_bench_csv
    from eye_purify.transform_net import load_model
    model = load_model(cfg.model)
    rows = bench(model, cfg.sizes, cfg.lbfgs_iters, _loss_net(cfg), _loss_config(cfg),
                 repeats=cfg.repeats, seed=cfg.seed)
    print(render_table(rows))
    write_bench_csv(cfg.csv or 'bench.csv', rows)
    return constants.EXIT_OK


@command('metrics pupil-center', required=('a', 'b'))
def cmd_metrics_pupil_center(cfg):
    from eye_purify.metrics import pupil_center_batch
    summary = pupil_center_batch(cfg.a, cfg.b, csv_path=cfg.csv)
    print("mean {:.3f} +/- {:.3f} px over {} pairs".format(summary.mean, summary.std, len(summary.rows)))
    return constants.EXIT_OK


@command('parity', required=('model', 'content_dir', 'style'))
def cmd_parity(cfg):
    from eye_purify.metrics import parity_batch
    from eye_purify.optimizers.training import list_images
    from eye_purify.transform_net import load_model
    model = load_model(cfg.model)
    loss_config = _loss_config(cfg)
    need_masks = bool(loss_config.local_layers())
    style, style_mask = _image_and_mask(cfg.style, cfg.style_mask, need_masks)
    samples = []
    for path in list_images(cfg.content_dir):
        image, mask = _image_and_mask(path, None, need_masks)
        samples.append((os.path.basename(path), image, mask))
    if not samples:
        raise exceptions.ImageIOError("no content images", path=cfg.content_dir)
    _, median = parity_batch(model, samples, style, style_mask, loss_config, _loss_net(cfg), cfg.iters,
                             size=cfg.size, seed=cfg.seed, csv_path=cfg.csv)
    print("median crossover iteration over {} images: {}".format(len(samples), median))
    return constants.EXIT_OK


# -- entry point --

def configure_logging(verbose=False):
    level = logging.DEBUG if verbose or settings.DEBUG_MODE else logging.INFO
    logging.basicConfig(format='%(levelname)s:%(message)s', level=level)


def main(argv=None):
    """Run one command; returns the process exit code."""
    parser, parsers = build_parser()
    try:
        args = parser.parse_args(argv)
        configure_logging(getattr(args, 'verbose', False))
        name = args.command
        if name == 'metrics':
            if not args.metric:
                raise exceptions.UsageError("metrics: choose a metric (pupil-center)")
            name = 'metrics ' + args.metric
        if name not in COMMANDS:
            raise exceptions.UsageError("choose a command: {}".format(', '.join(sorted(COMMANDS))))
        cfg = RunConfig.resolve(name, args, parsers[name], _defaults(), REQUIRED[name])
        cfg.log()
        return COMMANDS[name](cfg)
    except exceptions.EyePurifyException as e:
        configure_logging()
        e.log_error('exception')
        return e.exit_code
    except OSError as e:
        error = exceptions.ImageIOError(e.strerror or str(e), path=e.filename)
        configure_logging()
        error.log_error('exception')
        return error.exit_code


def run():
    sys.exit(main())
