import sys

from netsym.cli import main

sys.exit(main())
