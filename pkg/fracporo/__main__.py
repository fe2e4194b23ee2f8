# fracporo/__main__.py
import sys

from fracporo.main import main

sys.exit(main())
