import sys

from posskl.cli import main

sys.exit(main())
