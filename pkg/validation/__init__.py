"""Split manifest validation."""
