"""Deep material network: trainable laminate trees for multiscale material modeling."""
__version__ = "0.1.0"
