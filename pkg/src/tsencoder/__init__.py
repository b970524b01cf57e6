"""Universal time-series encoder: numerics, model, training and evaluation."""
from .encoder import EncoderConfig, EncoderParams, build, encode, represent, load, save

__all__ = ["EncoderConfig", "EncoderParams", "build", "encode", "represent", "load", "save"]
__version__ = "0.1.0"
