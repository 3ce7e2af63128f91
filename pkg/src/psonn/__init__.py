"""Heart-attack classification with a PSO-trained neural network and baselines."""

__version__ = "0.1.0"
