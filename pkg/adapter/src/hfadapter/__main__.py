import sys

from .adapter import serve_main

sys.exit(serve_main())
