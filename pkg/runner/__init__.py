"""Run schemas, optimizer, checkpoints, training loop and sampling."""
