"""Autodiff engine, neural building blocks, featurizer and the multi-state model."""
