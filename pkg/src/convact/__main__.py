import sys

from convact.cli import main

sys.exit(main())
