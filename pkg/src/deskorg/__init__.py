"""Learn personal desk-organisation preferences and lay out desks from them.

Scenes of catalog objects are annotated with quadrant and pairwise direction
relations; a random-forest pair or a restricted Markov logic network learns
to predict those relations from object attributes.
"""

__version__ = "0.1.0"
