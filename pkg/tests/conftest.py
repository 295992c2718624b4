import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from agrishare.data import generate_crop_dataset
from agrishare.pipeline import PipelineConfig, build_pipeline


@pytest.fixture(scope="session")
def crop_data():
    return generate_crop_dataset()


@pytest.fixture(scope="session")
def pipeline(crop_data):
    """Default dense pipeline: third of the data global, five markets, k=2."""
    return build_pipeline(crop_data, PipelineConfig())


@pytest.fixture(scope="session")
def sparse_pipeline(crop_data):
    """Sparse-share pipeline used by the privacy power analyses."""
    return build_pipeline(crop_data, PipelineConfig(global_fraction=0.9))


@pytest.fixture(autouse=True)
def _clean_audit_log():
    from agrishare import audit
    audit.reset()
    yield
    audit.reset()
