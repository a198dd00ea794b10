from .gradcheck import check_layer, gradient_check
from .layers import Conv2D, Dense, Flatten, MaxPool, ReLU
from .loss import ClassStats, loss_and_grad, weighted_log_loss
from .model import ConvNetModel, MLPModel, Network, model_bytes, read_model, softmax, write_model
from .train import TrainConfig, fit, sgd_step, train_classifier
