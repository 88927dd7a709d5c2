"""Smoke test for the `retarget` extension module.

Run python/build.sh first, then: python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import retarget  # noqa: E402


def main():
    scene = retarget.generate_scene("slim_to_fat", '{"frames": 8}')
    source, target, motion = scene.source, scene.target, scene.source_motion
    assert motion.frames == 8 and motion.joint_count == 22
    assert scene.target_torso_radius > scene.source_torso_radius

    skeleton = source.skeleton
    text = retarget.write_bvh(skeleton, motion)
    skeleton2, motion2 = retarget.parse_bvh(text)
    assert skeleton2.names == skeleton.names
    worst = max(
        abs(a - b)
        for fa, fb in zip(motion.translations(), motion2.translations())
        for a, b in zip(fa, fb)
    )
    assert worst < 1e-6, worst

    rest = motion.joint_positions(skeleton)
    assert len(rest) == 8 and len(rest[0]) == 22

    posed = target.deform(motion, 0)
    assert len(posed) == target.vertex_count

    tree = retarget.penetration_loss(target, motion, 50, 500)
    brute = retarget.penetration_loss(target, motion, 50, 500, brute_force=True)
    assert tree == brute and tree > 0.0, (tree, brute)

    assert retarget.temporal_consistency_loss(skeleton, motion, skeleton, motion) == 0.0

    config = '{"optimizer": {"iterations": 20, "samples": {"query": 50, "reference": 500}}}'
    result = retarget.retarget(motion, source, target, config, "final")
    assert len(result.trace) == 20
    assert result.pen_rate_after < result.pen_rate_before, (result.pen_rate_after, result.pen_rate_before)
    assert all(math.isfinite(v) for v in result.trace)

    mse, mse_local, pen, curv = retarget.evaluate(target, result.motion, result.motion)
    assert mse == 0.0 and mse_local == 0.0 and pen >= 0.0 and curv >= 0.0

    try:
        retarget.generate_scene("nope")
    except ValueError as e:
        assert "nope" in str(e)
    else:
        raise AssertionError("unknown scene accepted")

    try:
        retarget.parse_bvh("HIERARCHY\nROOT")
    except ValueError:
        pass
    else:
        raise AssertionError("truncated BVH accepted")

    print(
        "smoke test passed: Pen%% %.3f -> %.3f, loss %.3e -> %.3e"
        % (result.pen_rate_before, result.pen_rate_after, result.trace[0], min(result.trace))
    )


if __name__ == "__main__":
    main()
