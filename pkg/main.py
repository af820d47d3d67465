import sys

from src.prandtl_blowup.cli import main


if __name__ == "__main__":
    sys.exit(main())
