"""Export the fixture files the browser studio's tests validate against:
a MotionJSON clip, its forward-kinematics positions, and the mask/placement
JSON documents the UI must be able to reproduce byte-for-byte.

Usage: python scripts/export_ui_fixtures.py [frontend/fixtures]
"""
import json
import sys
from pathlib import Path

from monomotion.apps import lower_body_mask, upper_body_mask
from monomotion.motion_io import forward_kinematics, motion_to_json_dict
from monomotion.synthetic import scripted_gait


def main() -> int:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "frontend/fixtures")
    (out / "masks").mkdir(parents=True, exist_ok=True)

    motion = scripted_gait(frames=48)
    (out / "motion.json").write_text(json.dumps(motion_to_json_dict(motion), indent=1))

    positions = forward_kinematics(motion)
    (out / "fk_positions.json").write_text(json.dumps(positions.tolist()))

    topo = motion.topology
    lower = lower_body_mask(topo).to_json_dict()
    upper = upper_body_mask(topo).to_json_dict()
    (out / "masks" / "lower_body.json").write_text(json.dumps(lower, indent=1))
    (out / "masks" / "upper_body.json").write_text(json.dumps(upper, indent=1))
    (out / "masks" / "roi_frames.json").write_text(
        json.dumps({"frames": [[30, 60]]}, indent=1)
    )
    (out / "masks" / "placement.json").write_text(
        json.dumps(
            {
                "rois": [
                    {"source_start": 30, "source_end": 54, "target_start": 2},
                    {"source_start": 30, "source_end": 54, "target_start": 20},
                ],
                "total_frames": 96,
            },
            indent=1,
        )
    )
    print(f"fixtures written under {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
