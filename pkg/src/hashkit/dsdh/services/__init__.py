from .data import DataService
from .encoder import EncoderService
from .evaluation import EvaluationService
from .retrieval import RetrievalService
from .solver import SolverService

__all__ = [
    "DataService",
    "EncoderService",
    "EvaluationService",
    "RetrievalService",
    "SolverService",
]
