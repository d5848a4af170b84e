"""Trainable models, objectives, metrics and the optimizer."""
from .classifier import ClassifierConfig, ClassifierModel, classify_forward
from .completion import CompletionConfig, CompletionModel, complete_forward
from .losses import completion_loss, cross_entropy_loss
from .metrics import confusion_matrix, metrics, rmse
from .optim import Adam, adam_step
