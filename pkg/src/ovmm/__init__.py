"""Grid-world open-vocabulary mobile manipulation: simulator, heuristic agent, evaluation."""

__version__ = "0.1.0"
