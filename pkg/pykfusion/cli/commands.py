import logging
import os

import numpy as np
import pandas as pd

from pykfusion.cli.config import MNIST_FILES, synth_split
from pykfusion.cli.experiment import run_experiment, summary_frame
from pykfusion.data.datasets import Dataset
from pykfusion.data.idx import load_mnist_idx, save_idx_dataset
from pykfusion.fusion.fuse import fuse_pipeline, pad_model
from pykfusion.metrics.diagnostics import DiagReport, estimate_peq_counts, weight_mean_report, dominance_report
from pykfusion.metrics.evaluation import ConfusionMatrix, evaluate, TIE_BREAK_RULE
from pykfusion.model.persistence import save_model, load_model, dump_json

logger = logging.getLogger(__name__)


def restrict_classes(data: Dataset, classes):
    if classes is None or set(classes) == set(data.class_set):
        return data
    missing = set(classes) - set(data.class_set)
    if missing:
        raise ValueError('Classes {0} do not occur in the data'.format(sorted(missing)))
    return data.subset(np.isin(data.labels, list(classes)), sorted(classes))


def cmd_gen_data(output_dir, n_classes=10, n_features=64, n_per_class=200, n_test_per_class=50, center_scale=0.5,
                 noise_std=0.05, seed=0):
    """
    Write synthetic blobs as an MNIST-style directory of IDX files (features quantized to bytes).
    """
    train, test = synth_split(n_classes, n_features, n_per_class, n_test_per_class, center_scale, noise_std, seed)

    os.makedirs(output_dir, exist_ok=True)
    paths = {name: os.path.join(output_dir, f) for name, f in MNIST_FILES.items()}
    save_idx_dataset(train, paths['train_images'], paths['train_labels'])
    save_idx_dataset(test, paths['test_images'], paths['test_labels'])

    return {'files': paths, 'n_train': train.n_samples, 'n_test': test.n_samples, 'n_features': n_features,
            'classes': list(train.class_set)}


def cmd_train(config, verbose=False):
    """
    Train a constituent on the configured classes, compute its Fisher values and write the ModelFile.
    """
    if not config.images or not config.labels:
        raise ValueError('Training images and labels are required (--images/--labels or --data-dir)')
    if not config.output:
        raise ValueError('An output path is required')

    data = restrict_classes(load_mnist_idx(config.images, config.labels), config.classes)
    start = load_model(config.start_model).network if config.start_model else None
    model = config.estimator(verbose=verbose, start_network=start).fit(data).model
    save_model(model, config.output)

    meta = model.meta
    return {'model': config.output, 'config': config.to_dict(), 'classes': list(model.class_labels),
            'train_accuracy': meta['train_accuracy'], 'val_accuracy': meta['val_accuracy'],
            'epochs_run': meta['epochs_run'], 'best_epoch': meta['best_epoch'], 'fisher': model.fisher is not None}


def gen_data_frame(result):
    return pd.DataFrame([dict(n_train=result['n_train'], n_test=result['n_test'], n_features=result['n_features'],
                              n_classes=len(result['classes']))])


def train_frame(result):
    keys = ['train_accuracy', 'val_accuracy', 'epochs_run', 'best_epoch', 'fisher']
    return pd.DataFrame([dict(classes=' '.join(map(str, result['classes'])), **{k: result[k] for k in keys})])


def cmd_fuse(model_a_path, model_b_path, spec, output, pad=False, test_images=None, test_labels=None,
             report_path=None):
    """
    Fuse two ModelFiles, write the fused ModelFile and return the FusionReport (with test accuracy and confusion
    matrix when a test set is given).
    """
    model_a, model_b = load_model(model_a_path), load_model(model_b_path)

    if pad:
        widths = np.maximum(model_a.network.hidden_widths, model_b.network.hidden_widths).tolist()
        model_a, model_b = pad_model(model_a, widths), pad_model(model_b, widths)

    fused, report = fuse_pipeline(model_a, model_b, spec)

    if test_images is not None:
        report.accuracy, cm = evaluate(fused, load_mnist_idx(test_images, test_labels))
        report.confusion = cm.to_dict()

    save_model(fused, output)
    result = dict(report.to_dict(), model=output, spec=spec.to_dict())
    if report_path is not None:
        dump_json(result, report_path)
    return result


def fuse_frame(result):
    alignment = result['alignment']
    return pd.DataFrame([dict(name=result['name'], aligned=result['aligned'], accuracy=result.get('accuracy'),
                              identity_cost=sum(a['identity_cost'] for a in alignment) if alignment else None,
                              aligned_cost=sum(a['total_cost'] for a in alignment) if alignment else None)])


def cmd_eval(model_path, images, labels, restrict_to=None):
    model = load_model(model_path)
    test = load_mnist_idx(images, labels)
    if restrict_to is not None:
        test = restrict_classes(test, restrict_to)

    accuracy, cm = evaluate(model, test, restrict_to=restrict_to)
    return {'model': model_path, 'accuracy': accuracy, 'confusion': cm.to_dict(), 'n_samples': cm.total,
            'tie_break': TIE_BREAK_RULE}


def eval_frame(result):
    c = result['confusion']
    return ConfusionMatrix(c['classes'], c['counts']).to_frame()


def cmd_experiment(config, n_jobs=1):
    return run_experiment(config, n_jobs=n_jobs)


def experiment_frame(result):
    return summary_frame(result['summary'])


def cmd_diag(model_a_path=None, model_b_path=None, probe_images=None, probe_labels=None, peq=None):
    """
    Diagnostics report. With two models: per-layer weight statistics of both and, given probes, the dominance ratios
    of A over B on the first hidden layer (probes outside A's classes are dropped). With peq = (n, sigma_a, sigma_b,
    seed): the Monte Carlo estimate of P^eq.
    """
    report = DiagReport()

    if peq is not None:
        n, sigma_a, sigma_b, seed = peq
        report.peq = estimate_peq_counts(int(n), float(sigma_a), float(sigma_b), int(seed))

    if model_a_path is not None:
        model_a = load_model(model_a_path)
        report.weight_means['A'] = weight_mean_report(model_a.network)

        if model_b_path is not None:
            model_b = load_model(model_b_path)
            report.weight_means['B'] = weight_mean_report(model_b.network)

            if probe_images is not None:
                probes = load_mnist_idx(probe_images, probe_labels)
                probes = probes.subset(np.isin(probes.labels, model_a.class_labels))
                report.dominance = dominance_report(model_a, model_b, probes)

    if report.peq is None and not report.weight_means:
        raise ValueError('Nothing to diagnose: give two models or --peq')

    return report.to_dict()


def diag_frame(result):
    rows = [dict(network=k, **s) for k, v in result['weight_means'].items() for s in v]
    if not rows:
        return pd.DataFrame([result['peq']])
    return pd.DataFrame(rows)
