"""Numpy neural stack for position regression."""

from .layers import BiLSTM, Dense, Dropout, LSTM, ReLU, lstm_cell, mse_loss
from .model import Model, ModelConfig, expected_param_count
from .optim import Adam, PlateauScheduler
from .train import (ModelBundle, TrainConfig, TrainingError, load_bundle, predict,
                    predict_features, save_bundle, train)

FULL_MODEL = dict(hidden=500, dropout=0.4, dense_dims=(2048, 512, 64))
DESK_MODEL = dict(hidden=64, dropout=0.0, dense_dims=(256, 64))
