import sys

from .gateway import main

if __name__ == "__main__":
    sys.exit(main())
