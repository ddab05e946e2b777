from .layers import (dense1d_forward, gap1d_forward, maxpool1d_forward, sepconv1d_forward,
                     softmax)
from .model import (Layer, ModelSpec, TrainedModel, forward, load_model, loss_and_gradients,
                    predict_proba, save_model)
from .optim import AdamState, adam_step
from .train import TrainConfig, accuracy, evaluate, train
