import sys

from pykfusion.cli.main import main

sys.exit(main())
