import sys

from hdgml.cli import main

sys.exit(main())
