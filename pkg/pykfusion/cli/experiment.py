import logging
import warnings

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from pykfusion.core.misc import derive_seed, get_rng
from pykfusion.data.datasets import split_by_class
from pykfusion.fusion.fuse import fuse_pipeline, ZeroMeanWarning
from pykfusion.metrics.evaluation import evaluate, aggregate

logger = logging.getLogger(__name__)

# Key paths below a repetition's seed
SPLIT_KEY, TRAIN_KEY = 0, 1
MODEL_A, MODEL_B, MODEL_JOINT, COMMON_START = 0, 1, 2, 3


def architecture_key(hidden_widths):
    return 'x'.join(str(w) for w in hidden_widths) if hidden_widths else 'linear'


def draw_split(class_set, n_classes_a, seed):
    """
    A random subset of n_classes_a classes (half of them by default).
    """
    classes = np.asarray(sorted(class_set))
    if n_classes_a is None:
        n_classes_a = len(classes) // 2
    if not 0 < n_classes_a < len(classes):
        raise ValueError('Cannot give {0} of {1} classes to the first network'.format(n_classes_a, len(classes)))

    chosen = get_rng(seed).choice(classes, size=n_classes_a, replace=False)
    return tuple(sorted(int(c) for c in chosen))


def run_repetition(config, repetition, train, test):
    """
    One repetition: draw the class split, then for every architecture train A, B (and the joint model), fuse with
    every requested method and evaluate.
    """
    seed = derive_seed(config.seed, repetition)
    classes_a = config.classes_a or draw_split(train.class_set, config.n_classes_a, derive_seed(seed, SPLIT_KEY))

    train_a, train_b = split_by_class(train, classes_a)
    test_a, test_b = split_by_class(test, classes_a)

    result = {'repetition': repetition, 'seed': seed, 'classes_a': list(classes_a),
              'classes_b': list(train_b.class_set), 'architectures': {}}

    for i, widths in enumerate(config.architectures):
        start = None
        if config.shared_init:
            start = config.common_start(train.n_features, widths, train.class_set,
                                        derive_seed(seed, TRAIN_KEY, i, COMMON_START))

        def fit(data, model_key):
            tc = config.train_config(widths, derive_seed(seed, TRAIN_KEY, i, model_key))
            return tc.estimator(start_network=start).fit(data).model

        model_a, model_b = fit(train_a, MODEL_A), fit(train_b, MODEL_B)
        accuracies = {'A': evaluate(model_a, test_a)[0], 'B': evaluate(model_b, test_b)[0]}
        fusion_warnings = {}

        for spec in config.fusions:
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', ZeroMeanWarning)
                fused, report = fuse_pipeline(model_a, model_b, spec)
            accuracies[spec.name] = evaluate(fused, test)[0]
            fusion_warnings[spec.name] = report.warnings

        if config.joint_baseline:
            accuracies['joint'] = evaluate(fit(train, MODEL_JOINT), test)[0]

        result['architectures'][architecture_key(widths)] = {'accuracy': accuracies, 'warnings': fusion_warnings}

    logger.info('repetition %d (classes A %s): %s', repetition, list(classes_a),
                {k: v['accuracy'] for k, v in result['architectures'].items()})
    return result


def _guarded(config, repetition, train, test):
    try:
        return run_repetition(config, repetition, train, test)
    except (ValueError, FloatingPointError) as e:
        logger.error('repetition %d failed: %s', repetition, e)
        return {'repetition': repetition, 'error': str(e)}


def summarize(results):
    """
    Mean and sample standard deviation of every accuracy over the repetitions, keyed by architecture and model.
    The standard deviation is None when fewer than two repetitions are available.
    """
    runs = {}
    for r in results:
        for arch, entry in r['architectures'].items():
            for name, acc in entry['accuracy'].items():
                runs.setdefault(arch, {}).setdefault(name, []).append(acc)

    summary = {}
    for arch, models in runs.items():
        summary[arch] = {}
        for name, accs in models.items():
            mean, std = aggregate(accs) if len(accs) > 1 else (float(accs[0]), None)
            summary[arch][name] = {'mean': mean, 'std': std, 'runs': accs}
    return summary


def summary_frame(summary):
    rows = [dict(architecture=arch, model=name, mean=s['mean'], std=s['std'], runs=len(s['runs']))
            for arch, models in summary.items() for name, s in models.items()]
    return pd.DataFrame(rows, columns=['architecture', 'model', 'mean', 'std', 'runs'])


def run_experiment(config, n_jobs=1):
    """
    Run every repetition of an experiment (in parallel when n_jobs != 1) and aggregate the accuracies.

    Repetitions are isolated by their derived seeds, so the outcome does not depend on n_jobs. A failing repetition
    stops the experiment: results up to the first failure are kept and the output is flagged partial.

    Returns
    -------
    outcome: dict
        config, per-repetition results, summary and the partial flag (with the failure when partial).
    """
    train, test = config.data.load()

    if n_jobs == 1:
        outcomes = []
        for r in range(config.repetitions):
            outcomes.append(_guarded(config, r, train, test))
            if 'error' in outcomes[-1]:
                break
    else:
        outcomes = Parallel(n_jobs=n_jobs)(delayed(_guarded)(config, r, train, test)
                                           for r in range(config.repetitions))

    results, failure = [], None
    for o in sorted(outcomes, key=lambda o: o['repetition']):
        if 'error' in o:
            failure = o
            break
        results.append(o)

    outcome = {'config': config.to_dict(), 'results': results, 'summary': summarize(results),
               'partial': failure is not None}
    if failure is not None:
        outcome['failure'] = failure
    return outcome
