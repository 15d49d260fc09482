"""Mention-ranking coreference models trained with heuristic, reward-rescaled and REINFORCE objectives."""

__version__ = "0.1.0"
