"""Speed-of-sound estimation with sinusoidal implicit networks and differentiable delay-and-sum."""

__version__ = "0.1.0"
