"""Desk-scale simulator for hybrid quantum-classical photonic neural networks."""

from . import classical, cvqnn, datagen, engine, fock, noise, training
from .cvqnn import NetworkShape, QuantumLayerParams, param_count
from .classical import ClassicalNetwork, DenseLayer, HybridNetwork, build_classical_twin
from .fock import FockState, GateMatrix

__all__ = [
    "classical", "cvqnn", "datagen", "engine", "fock", "noise", "training",
    "NetworkShape", "QuantumLayerParams", "param_count",
    "ClassicalNetwork", "DenseLayer", "HybridNetwork", "build_classical_twin",
    "FockState", "GateMatrix",
]
