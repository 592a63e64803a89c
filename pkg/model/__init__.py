from model.head import RawPrediction
from model.hypertea import HyperTea

__all__ = ["HyperTea", "RawPrediction"]
