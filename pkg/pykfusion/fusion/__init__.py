from .align import (AssignmentSolution, AssignmentError, FusionError, ArchitectureMismatch, MissingFisherError,
                    pair_cost, solve_assignment, permute_hidden, align_networks)
from .fuse import (FusionSpec, FusionReport, ZeroMeanWarning, ws_fuse_layer, ewc_fuse_layer, concat_output,
                   pad_to_match, pad_model, fuse_pipeline)
