import sys

from qjump.report import main


sys.exit(main())
