import sys

from credi.cli import main

sys.exit(main())
