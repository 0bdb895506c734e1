import pytest

from phasecoord.bundled import bundled_names, get_bundled
from phasecoord.mcpal import load_migration
from phasecoord.model import initial_configuration


@pytest.fixture(scope="session")
def bundles():
    return {name: get_bundled(name) for name in bundled_names()}


@pytest.fixture(scope="session")
def shop_loaded():
    """The flagship system: bundled shop model with its migration loaded."""
    bundle = get_bundled("shop-migration")
    model = bundle.model()
    config = initial_configuration(model)
    return load_migration(model, config, bundle.fragment())
