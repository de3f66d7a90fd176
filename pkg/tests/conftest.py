from __future__ import annotations

from pathlib import Path

import pytest

from gputrace import parse_profile, parse_session, write_synthetic_session

from helpers import FIXED_WALL, PIPELINE_PROFILE


@pytest.fixture(scope="session")
def pipeline_session_dir(tmp_path_factory) -> Path:
    """The ten-step pipeline fixture, written once per test run."""
    directory = tmp_path_factory.mktemp("pipeline") / "session"
    spec = parse_profile(PIPELINE_PROFILE)
    write_synthetic_session(
        directory, spec.profile, spec.marks, period=1.0, start_wall=FIXED_WALL
    )
    return directory


@pytest.fixture(scope="session")
def pipeline_session(pipeline_session_dir):
    return parse_session(pipeline_session_dir)


@pytest.fixture
def top_batch_path() -> Path:
    return Path(__file__).parent / "data" / "top_batch.txt"


@pytest.fixture
def top_batch_text(top_batch_path) -> str:
    return top_batch_path.read_text(encoding="utf-8")
