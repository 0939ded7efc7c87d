import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from pykfusion.core.misc import derive_seed
from pykfusion.data.datasets import Dataset, holdout
from pykfusion.model.fisher import compute_fisher
from pykfusion.model.network import init_network, ArchitectureError, Network
from pykfusion.model.training import TrainHyper, train

DEFAULT_LOSS = {'softmax': 'cross_entropy', 'sigmoid': 'square'}


def loss_for_output(output_activation, loss_kind=None):
    if loss_kind is not None:
        return loss_kind
    return DEFAULT_LOSS.get(output_activation, 'square')


def warm_start(start: Network, fresh: Network):
    """
    Hidden layers of start on top of a freshly initialized network of the same architecture. start's output layer is
    kept too when it has as many units as fresh's; otherwise fresh's output layer is used. The class labels are
    fresh's.
    """
    if start.n_features != fresh.n_features or start.hidden_widths != fresh.hidden_widths:
        raise ArchitectureError('Starting network has widths {0}, expected {1}'.format(start.widths[:-1],
                                                                                   fresh.widths[:-1]))
    if start.activations[:-1] != fresh.activations[:-1]:
        raise ArchitectureError('Starting network has hidden activations {0}, expected {1}'.format(
            start.activations[:-1], fresh.activations[:-1]))

    same_head = (start.head.weights.shape == fresh.head.weights.shape
                 and start.head.activation == fresh.head.activation)
    head = start.head if same_head else fresh.head
    return Network(tuple(start.layers[:-1]) + (head,), fresh.class_labels).copy()


# noinspection PyAttributeOutsideInit
class FANNClassifier(BaseEstimator, ClassifierMixin):
    """
    A constituent network: a dense ReLU network trained on its own classes, with its diagonal Fisher values
    computed on its training split at the end of training.

    Parameters
    ----------
    hidden_widths: tuple of int
        Units of every hidden layer. An empty tuple gives a linear classifier.
    hidden_activation: str
    output_activation: str
        'softmax' (trained with cross-entropy) or 'sigmoid' (trained with the square loss).
    loss_kind: str or None
        Overrides the loss implied by output_activation.
    learning_rate, batch_size, max_epochs, patience, l2_coeff:
        See TrainHyper.
    val_fraction: float
        Fraction of the training data held out (stratified) for early stopping.
    fisher: bool
        Whether to compute Fisher values after training.
    fisher_samples: int or None
        Use only this many training samples for the Fisher values.
    init_std: float
        Standard deviation of the initial weights.
    start_network: Network or None
        Start training from this network's hidden layers (see warm_start) instead of a random initialization.
    seed: int
        Master seed. Initialization, holdout, shuffling and Fisher subsampling use seeds derived from it.
    verbose: bool
    """
    def __init__(self, hidden_widths=(800,), hidden_activation='relu', output_activation='softmax', loss_kind=None,
                 learning_rate=0.001, batch_size=200, max_epochs=100, patience=5, l2_coeff=0., val_fraction=0.2,
                 fisher=True, fisher_samples=None, init_std=0.05, start_network=None, seed=0,
                 verbose=False):
        self.hidden_widths = hidden_widths
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.loss_kind = loss_kind
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.l2_coeff = l2_coeff
        self.val_fraction = val_fraction
        self.fisher = fisher
        self.fisher_samples = fisher_samples
        self.init_std = init_std
        self.start_network = start_network
        self.seed = seed
        self.verbose = verbose

    @property
    def model(self):
        try:
            return self.model_
        except AttributeError:
            raise NotFittedError('Cannot access the trained model until the classifier is fitted')

    @property
    def is_fitted(self):
        return hasattr(self, 'model_')

    @property
    def classes_(self):
        return np.asarray(self.model.class_labels)

    @property
    def hyper(self):
        return TrainHyper(learning_rate=self.learning_rate, batch_size=self.batch_size, max_epochs=self.max_epochs,
                          patience=self.patience, loss_kind=loss_for_output(self.output_activation, self.loss_kind),
                          l2_coeff=self.l2_coeff, seed=derive_seed(self.seed, 2))

    def fit(self, X, y=None, classes=None):
        """
        Fit on features X (values in [0, 1]) and labels y, or on a Dataset passed as X.

        Parameters
        ----------
        X: numpy.ndarray or Dataset
        y: array like or None
        classes: iterable of int or None
            The declared class set. Defaults to the labels present in y.
        """
        data = X if isinstance(X, Dataset) else Dataset(X, y, classes)

        n_val = max(1, int(round(self.val_fraction * data.n_samples)))
        train_set, val_set = holdout(data, n_val, seed=derive_seed(self.seed, 1))

        widths = [data.n_features] + list(self.hidden_widths) + [len(data.class_set)]
        activations = [self.hidden_activation] * len(self.hidden_widths) + [self.output_activation]
        net = init_network(widths, activations, data.class_set, seed=derive_seed(self.seed, 0), std=self.init_std)
        if self.start_network is not None:
            net = warm_start(self.start_network, net)

        model = train(net, train_set, val_set, self.hyper, verbose=self.verbose)

        if self.fisher:
            model = model.with_fisher(compute_fisher(model, train_set, self.fisher_samples, derive_seed(self.seed, 3)))

        self.model_ = model
        return self

    def predict_proba(self, X):
        return self.model.predict_proba(X)

    def predict(self, X):
        return self.model.predict(X)

    @staticmethod
    def from_model(model):
        clf = FANNClassifier(hidden_widths=tuple(model.network.hidden_widths),
                             output_activation=model.network.head.activation)
        clf.model_ = model
        return clf
