from .network import (DenseLayer, Network, ParamStack, LayerParams, ArchitectureError, init_network, forward, loss,
                      predict_proba)
from .backprop import backward
from .training import TrainHyper, TrainedModel, TrainingError, train
from .fisher import FisherDiag, fisher_square, fisher_xent, compute_fisher
from .estimator import FANNClassifier
from .persistence import save_model, load_model
