"""Dynamical-atoms sparse autoencoder for next-frame prediction."""

from .atoms import PoleSet, init_ring, expand_quadrants
from .dictionary import Dictionary, build_encoder, build_decoder, build_pair, lipschitz_constant
from .solver import BACKEND, CodeField, fista_batch, objective

__version__ = "0.1.0"
