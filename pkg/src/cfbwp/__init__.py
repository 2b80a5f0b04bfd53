"""In-game home-team win probability for college football."""

__version__ = "0.1.0"
