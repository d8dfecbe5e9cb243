"""RNA structure IO, alignment, clustering, splits and synthetic backbones."""
