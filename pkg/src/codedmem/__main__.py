import sys

from codedmem.cli import main

sys.exit(main())
