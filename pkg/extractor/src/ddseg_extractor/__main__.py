import sys

from ddseg_extractor.cli import main

if __name__ == "__main__":
    sys.exit(main())
