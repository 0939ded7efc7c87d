from .datasets import Dataset, DatasetError, synth_blobs, split_by_class, holdout, concat_datasets
from .idx import load_mnist_idx, save_idx_dataset, IdxFormatError
