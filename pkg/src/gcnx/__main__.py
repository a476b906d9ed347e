import sys

from gcnx.cli import main

sys.exit(main())
