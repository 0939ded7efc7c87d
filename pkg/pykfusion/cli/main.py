import argparse
import json
import logging
import sys

from pykfusion.__version__ import __version__
from pykfusion.cli import commands
from pykfusion.cli.config import TrainConfig, ExperimentConfig, read_config, find_idx
from pykfusion.fusion.fuse import FusionSpec
from pykfusion.model.persistence import json_default

logger = logging.getLogger(__name__)


def _widths(text):
    # '' is the linear classifier, '200,200' two hidden layers
    return [int(w) for w in text.split(',') if w.strip()]


def _overrides(args, names):
    return {dest: getattr(args, key) for key, dest in names.items() if getattr(args, key, None) is not None}


def _add_train_flags(p):
    p.add_argument('--hidden-widths', type=_widths, help='comma separated hidden widths, "" for a linear model')
    p.add_argument('--hidden-activation', choices=['relu', 'sigmoid', 'identity'])
    p.add_argument('--output-activation', choices=['softmax', 'sigmoid'])
    p.add_argument('--loss', choices=['cross_entropy', 'square'], help='defaults to the output activation\'s loss')
    p.add_argument('--lr', type=float, help='Adam learning rate (0.001)')
    p.add_argument('--batch-size', type=int, help='mini-batch size (200)')
    p.add_argument('--max-epochs', type=int, help='epoch cap (100)')
    p.add_argument('--patience', type=int, help='early stopping patience in epochs (5)')
    p.add_argument('--l2', type=float, help='L2 coefficient on weights (0)')
    p.add_argument('--val-fraction', type=float, help='stratified validation share (0.2)')
    p.add_argument('--fisher-samples', type=int, help='training samples used for the Fisher values (all)')
    p.add_argument('--init-std', type=float, help='standard deviation of the initial weights (0.05)')
    p.add_argument('--seed', type=int)


TRAIN_FLAGS = {'hidden_widths': 'hidden_widths', 'hidden_activation': 'hidden_activation',
               'output_activation': 'output_activation', 'loss': 'loss_kind', 'lr': 'learning_rate',
               'batch_size': 'batch_size', 'max_epochs': 'max_epochs', 'patience': 'patience', 'l2': 'l2_coeff',
               'val_fraction': 'val_fraction', 'fisher_samples': 'fisher_samples', 'init_std': 'init_std',
               'seed': 'seed'}


def build_parser():
    parser = argparse.ArgumentParser(prog='pykfusion',
                                     description='Non-iterative fusion of neural networks trained on disjoint classes')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    parser.add_argument('-v', '--verbose', action='count', default=0, help='-v for progress, -vv for every epoch')
    parser.add_argument('--pretty', action='store_true', help='print tables instead of JSON')

    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('gen-data', help='write synthetic blobs as MNIST-style IDX files')
    p.add_argument('output_dir')
    p.add_argument('--classes', type=int, default=10)
    p.add_argument('--features', type=int, default=64)
    p.add_argument('--per-class', type=int, default=200)
    p.add_argument('--test-per-class', type=int, default=50)
    p.add_argument('--center-scale', type=float, default=0.5)
    p.add_argument('--noise-std', type=float, default=0.05)
    p.add_argument('--seed', type=int, default=0)

    p = sub.add_parser('train', help='train a constituent network and compute its Fisher values')
    p.add_argument('--config', help='JSON file with TrainConfig entries (flags override it)')
    p.add_argument('--images', help='IDX training images')
    p.add_argument('--labels', help='IDX training labels')
    p.add_argument('--data-dir', help='MNIST-style directory (instead of --images/--labels)')
    p.add_argument('-o', '--output', help='ModelFile to write')
    p.add_argument('--classes', type=int, nargs='+', help='train on these classes only')
    p.add_argument('--no-fisher', dest='fisher', action='store_const', const=False)
    p.add_argument('--start-model', help='ModelFile whose hidden layers training starts from')
    _add_train_flags(p)

    p = sub.add_parser('fuse', help='fuse two ModelFiles')
    p.add_argument('model_a')
    p.add_argument('model_b')
    p.add_argument('--config', help='JSON file with FusionSpec entries (flags override it)')
    p.add_argument('--method', choices=['ws', 'ewc'])
    p.add_argument('--policy', nargs='+', help='hidden layer rule(s): sum, average or ewc')
    align = p.add_mutually_exclusive_group()
    align.add_argument('--align', dest='align', action='store_const', const=True)
    align.add_argument('--no-align', dest='align', action='store_const', const=False)
    p.add_argument('--epsilon', type=float)
    p.add_argument('--postsynaptic', dest='include_postsynaptic', action='store_const', const=True,
                   help='include outgoing weights in the alignment cost')
    p.add_argument('--tie-break', type=float)
    p.add_argument('--pad', action='store_true', help='zero-pad hidden layers to equal widths first')
    p.add_argument('-o', '--output', required=True, help='fused ModelFile to write')
    p.add_argument('--report', help='also write the report to this file')
    p.add_argument('--test-images')
    p.add_argument('--test-labels')

    p = sub.add_parser('eval', help='accuracy and confusion matrix of a ModelFile')
    p.add_argument('model')
    p.add_argument('--images', required=True)
    p.add_argument('--labels', required=True)
    p.add_argument('--restrict', type=int, nargs='+', help='score only these classes')

    p = sub.add_parser('experiment', help='repeated split-class fusion experiment')
    p.add_argument('--config', help='JSON file with ExperimentConfig entries (flags override it)')
    p.add_argument('--data-dir', help='MNIST-style directory; synthetic blobs when omitted')
    p.add_argument('--architectures', type=_widths, nargs='+', help='e.g. 800 or 200,200 or "" (linear)')
    p.add_argument('--methods', nargs='+', help='ws, ws-average, ws-aligned, ewc, ewc-noalign')
    p.add_argument('--classes-a', type=int, nargs='+', help='fixed classes of A (random split otherwise)')
    p.add_argument('--repetitions', type=int)
    p.add_argument('--joint-baseline', action='store_const', const=True)
    p.add_argument('--shared-init', action='store_const', const=True,
                   help='start both constituents from one common initialization')
    p.add_argument('--n-jobs', type=int, default=1)
    p.add_argument('-o', '--output', help='also write the outcome to this file')
    _add_train_flags(p)

    p = sub.add_parser('diag', help='weights summation diagnostics')
    p.add_argument('--model-a')
    p.add_argument('--model-b')
    p.add_argument('--probe-images')
    p.add_argument('--probe-labels')
    p.add_argument('--peq', nargs=4, metavar=('N', 'SIGMA_A', 'SIGMA_B', 'SEED'), help='estimate P^eq')

    return parser


def _train(args):
    d = read_config(args.config)
    if args.data_dir:
        d['images'], d['labels'] = find_idx(args.data_dir, 'train_images'), find_idx(args.data_dir, 'train_labels')
    d.update(_overrides(args, dict(TRAIN_FLAGS, images='images', labels='labels', output='output',
                                   classes='classes', fisher='fisher', start_model='start_model')))
    config = TrainConfig.from_dict(d)
    return commands.cmd_train(config, verbose=args.verbose > 0), commands.train_frame


def _fuse(args):
    d = read_config(args.config)
    d.update(_overrides(args, {'method': 'method', 'align': 'align', 'epsilon': 'epsilon',
                               'include_postsynaptic': 'include_postsynaptic', 'tie_break': 'tie_break'}))
    if args.policy:
        d['hidden_policy'] = args.policy[0] if len(args.policy) == 1 else args.policy
    spec = FusionSpec.from_dict(d)

    result = commands.cmd_fuse(args.model_a, args.model_b, spec, args.output, pad=args.pad,
                               test_images=args.test_images, test_labels=args.test_labels, report_path=args.report)
    return result, commands.fuse_frame


def _experiment(args):
    d = read_config(args.config)
    if args.data_dir:
        d['data'] = {'kind': 'idx', 'directory': args.data_dir}

    d.update(_overrides(args, {'architectures': 'architectures', 'methods': 'fusions', 'classes_a': 'classes_a',
                               'repetitions': 'repetitions', 'seed': 'seed',
                               'joint_baseline': 'joint_baseline', 'shared_init': 'shared_init',
                               'hidden_activation': 'hidden_activation',
                               'output_activation': 'output_activation', 'loss': 'loss_kind',
                               'val_fraction': 'val_fraction', 'fisher_samples': 'fisher_samples',
                               'init_std': 'init_std'}))

    hyper = dict(d.get('hyper', {}))
    hyper.update(_overrides(args, {'lr': 'learning_rate', 'batch_size': 'batch_size', 'max_epochs': 'max_epochs',
                                   'patience': 'patience', 'l2': 'l2_coeff'}))
    d['hyper'] = hyper
    if args.hidden_widths is not None and args.architectures is None:
        d['architectures'] = [args.hidden_widths]

    config = ExperimentConfig.from_dict(d)
    result = commands.cmd_experiment(config, n_jobs=args.n_jobs)
    if args.output:
        commands.dump_json(result, args.output)
    return result, commands.experiment_frame


def dispatch(args):
    """
    Run the selected command. Returns its JSON-serializable result and the function rendering it as a table.
    """
    if args.command == 'gen-data':
        result = commands.cmd_gen_data(args.output_dir, args.classes, args.features, args.per_class,
                                       args.test_per_class, args.center_scale, args.noise_std, args.seed)
        return result, commands.gen_data_frame
    if args.command == 'train':
        return _train(args)
    if args.command == 'fuse':
        return _fuse(args)
    if args.command == 'eval':
        return commands.cmd_eval(args.model, args.images, args.labels, args.restrict), commands.eval_frame
    if args.command == 'experiment':
        return _experiment(args)
    if args.command == 'diag':
        return commands.cmd_diag(args.model_a, args.model_b, args.probe_images, args.probe_labels,
                                 args.peq), commands.diag_frame

    raise ValueError('Unknown command {0!r}'.format(args.command))


def main(argv=None):
    args = build_parser().parse_args(argv)

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr, format='%(name)s %(levelname)s: %(message)s')

    try:
        result, table = dispatch(args)
    except (ValueError, OSError) as e:
        logger.debug('command failed', exc_info=True)
        print('pykfusion {0}: error: {1}'.format(args.command, e), file=sys.stderr)
        return 1

    if args.pretty:
        print(table(result).to_string())
    else:
        print(json.dumps(result, indent=1, sort_keys=True, default=json_default))

    return 1 if result.get('partial') else 0


if __name__ == '__main__':
    sys.exit(main())
