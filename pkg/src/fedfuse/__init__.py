"""Federated learning by model fusion for offensive language detection."""

from .checkpoint import load, save
from .coordinator import AuditLog, Client, ClientRecord, Coordinator, FusionJob, enumerate_fusion_jobs, run_fusion
from .evaluation import APPROACHES, EvaluationReport, arbitrate, ensemble_predict, macro_f1
from .model import ModelArchitecture, ModelState, forward, init_base, loss_and_gradients, predict_proba, tokenize
from .pipeline import RunConfig, run_pipeline
from .tensor import ParameterSet, elementwise_mean
from .train import TrainingConfig, finetune_fused, train_local

__version__ = "0.1.0"

__all__ = [
    "load", "save",
    "AuditLog", "Client", "ClientRecord", "Coordinator", "FusionJob", "enumerate_fusion_jobs", "run_fusion",
    "APPROACHES", "EvaluationReport", "arbitrate", "ensemble_predict", "macro_f1",
    "ModelArchitecture", "ModelState", "forward", "init_base", "loss_and_gradients", "predict_proba", "tokenize",
    "RunConfig", "run_pipeline",
    "ParameterSet", "elementwise_mean",
    "TrainingConfig", "finetune_fused", "train_local",
]
