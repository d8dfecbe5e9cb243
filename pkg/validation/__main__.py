"""Entry point for python -m validation (split manifest validation)."""

from validation.validate_split import app

if __name__ == "__main__":
    app()
