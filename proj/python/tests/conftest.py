import os
import shutil
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def cli():
    """Path to the attnroute executable, from ATTNROUTE_CLI, the build tree or PATH."""
    candidates = [
        os.environ.get("ATTNROUTE_CLI"),
        str(Path(__file__).resolve().parents[2] / "build" / "attnroute"),
        shutil.which("attnroute"),
    ]
    for c in candidates:
        if c and Path(c).is_file() and os.access(c, os.X_OK):
            return c
    pytest.skip("attnroute executable not found")
