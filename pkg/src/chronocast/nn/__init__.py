from .gradcheck import gradient_check
from .layers import LSTM, Conv1D, Dense, Dropout, GlobalAvgPool1D, ShapeError
from .losses import mse_loss
from .model import Divergence, Sequential
from .optim import SGD, Adam, NonFiniteGradient
from .training import TrainConfig, TrainResult, train

__all__ = [
    "LSTM", "Conv1D", "Dense", "Dropout", "GlobalAvgPool1D", "ShapeError",
    "mse_loss", "Divergence", "Sequential", "SGD", "Adam", "NonFiniteGradient",
    "TrainConfig", "TrainResult", "train", "gradient_check",
]
