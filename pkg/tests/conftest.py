import shutil
import subprocess
import sys
from pathlib import Path

import pytest

# let test modules import the shared helper modules
sys.path.insert(0, str(Path(__file__).parent))

FIXTURE_PROJECTS = Path(__file__).parent / "fixtures" / "projects"

BUILDABLE = ("hello", "mathlib", "shapes", "multidir", "optcap", "legacy")
FAILING = ("missing-header", "broken-makefile", "needs-exotic-cc", "infinite-build")


def _git(args, cwd):
    subprocess.run(["git", *args], cwd=cwd, check=True, capture_output=True)


def make_fixture_repo(name: str, dest: Path) -> tuple[Path, str]:
    """Copy a fixture project into dest and commit it; returns (path, sha)."""
    target = dest / name
    shutil.copytree(FIXTURE_PROJECTS / name, target)
    _git(["init", "-q"], target)
    _git(["config", "user.email", "fixtures@binforge.test"], target)
    _git(["config", "user.name", "fixtures"], target)
    _git(["add", "."], target)
    _git(["commit", "-qm", "fixture"], target)
    sha = subprocess.run(
        ["git", "rev-parse", "HEAD"], cwd=target, capture_output=True, text=True, check=True
    ).stdout.strip()
    return target, sha


@pytest.fixture(scope="session")
def fixture_repos(tmp_path_factory):
    """name -> (repo path, head sha) for every bundled fixture project."""
    base = tmp_path_factory.mktemp("fixture-repos")
    return {
        name: make_fixture_repo(name, base)
        for name in BUILDABLE + FAILING
    }
