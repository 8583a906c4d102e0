import sys

from gridflow.run import main

sys.exit(main())
