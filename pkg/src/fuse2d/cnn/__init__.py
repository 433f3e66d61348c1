"""From-scratch NumPy convolutional classifier."""

from .layers import Conv, Dense, Flatten, LayerSpec, MaxPool, Softmax, softmax
from .model import (
    Model,
    NonFiniteError,
    architecture,
    backward,
    forward,
    gradcheck_architecture,
    init_model,
    logits,
    loss_and_gradients,
    predict,
    predict_proba,
    weighted_cross_entropy,
)
from .optim import adam_step, freeze_features
from .serialize import ModelFormatError, load_model, save_model
from .train import Dataset, EpochRecord, TrainConfig, fit_two_stage, scale_images, write_history
