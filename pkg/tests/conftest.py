import pytest

import synthdata


@pytest.fixture(scope="session")
def big_fixture():
    """100k-word corpus plus covering lexicon; built once per session."""
    return synthdata.big_fixture()
