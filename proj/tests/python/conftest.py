import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[2]

# When not run through ctest, fall back to the build tree for the package
# and the command-line binary.
try:
    import mixedreg  # noqa: F401
except ImportError:
    sys.path.insert(0, str(ROOT / "build" / "python"))
    import mixedreg  # noqa: F401


def _cli_path():
    env = os.environ.get("MIXEDREG_BIN")
    if env:
        return Path(env)
    built = ROOT / "build" / "tools" / "mixedreg"
    if built.exists():
        return built
    found = shutil.which("mixedreg")
    return Path(found) if found else None


@pytest.fixture(scope="session")
def cli():
    path = _cli_path()
    if path is None or not path.exists():
        pytest.skip("command-line binary not built")

    def run(*args, **kwargs):
        kwargs.setdefault("capture_output", True)
        kwargs.setdefault("text", True)
        kwargs.setdefault("timeout", 300)
        return subprocess.run([str(path), *args], **kwargs)

    return run
