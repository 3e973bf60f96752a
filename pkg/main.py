import sys

from lanczos_kn.main import main


if __name__ == "__main__":
    sys.exit(main())
