import sys

from truerand.cli import main

sys.exit(main())
