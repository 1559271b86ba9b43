"""Cross-location attention GNN for epidemic forecasting, on a small numpy autodiff core."""

from .baselines import (ArmaModel, DirectLinearModel, NumericalError, RNNBaseline, direct_linear_param_count,
                        fit_arma, fit_direct_linear, rnn_param_count)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (AdjacencyMatrix, DataError, EpiDataset, Normalizer, PreparedData, WindowSet, fit_normalizer,
                   load_adjacency, load_series, make_windows, prepare, split_bounds)
from .diffcore import Tensor, backward, finite_diff_check, no_grad
from .evaluate import Evaluation, MetricsReport, evaluate, mae, pcc, rmse
from .model import ColaGNN, ColaGnnConfig, parameter_count
from .synthetic import seasonal_benchmark
from .train import TrainConfig, TrainingDiverged, TrainReport, train_model

__version__ = "0.1.0"
