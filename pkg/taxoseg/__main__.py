import sys

from taxoseg.cli import main

sys.exit(main())
