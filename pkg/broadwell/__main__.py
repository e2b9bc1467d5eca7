"""Run the command line application with ``python -m broadwell``."""
from broadwell.cli import main

if __name__ == "__main__":  # pragma: no cover
    main()
