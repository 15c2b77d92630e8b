"""Cross-component contracts: the mask/placement documents the browser studio
emits (checked in as frontend fixtures) must validate against this package's
schemas and match its presets exactly."""
import json
from pathlib import Path

import numpy as np
import pytest

from monomotion import apps
from monomotion.motion_io import motion_from_json_dict, to_feature_tensor

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"

pytestmark = pytest.mark.skipif(
    not FIXTURES.exists(), reason="frontend fixtures not exported"
)


@pytest.fixture(scope="module")
def fixture_motion():
    return motion_from_json_dict(json.loads((FIXTURES / "motion.json").read_text()))


def test_fixture_masks_validate(fixture_motion):
    for path in sorted((FIXTURES / "masks").glob("*.json")):
        doc = json.loads(path.read_text())
        if "rois" in doc:
            continue  # placement documents have their own schema
        mask, ranges = apps.mask_from_json(doc)
        mask.feature_vector(fixture_motion.topology)
        for start, end in ranges:
            assert 0 <= start < end


def test_lower_body_fixture_matches_preset(fixture_motion):
    doc = json.loads((FIXTURES / "masks" / "lower_body.json").read_text())
    assert doc == apps.lower_body_mask(fixture_motion.topology).to_json_dict()


def test_upper_body_fixture_matches_preset(fixture_motion):
    doc = json.loads((FIXTURES / "masks" / "upper_body.json").read_text())
    assert doc == apps.upper_body_mask(fixture_motion.topology).to_json_dict()


def test_placement_fixture_constructs(fixture_motion):
    doc = json.loads((FIXTURES / "masks" / "placement.json").read_text())
    clip = to_feature_tensor(fixture_motion)
    for roi in doc["rois"]:
        apps.RoiPlacement(
            clip,
            min(roi["source_start"], clip.frames - 2),
            min(roi["source_end"], clip.frames),
            roi["target_start"],
        )


def test_fk_fixture_matches_primary(fixture_motion):
    from monomotion.motion_io import forward_kinematics

    expected = np.asarray(
        json.loads((FIXTURES / "fk_positions.json").read_text())
    )
    got = forward_kinematics(fixture_motion)
    assert np.abs(got - expected).max() < 1e-9
