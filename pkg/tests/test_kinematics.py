import math

import numpy as np
import pytest

from ccplan.geometry import Pose, Sphere, point_body
from ccplan.kinematics import (
    Joint,
    RobotModel,
    forward_kinematics,
    planar_point_robot,
    point_jacobian,
    posed_link_shapes,
)


def offset_x(d, dim=3):
    t = np.zeros(dim)
    t[0] = d
    return Pose(np.eye(dim), t)


def make_chain(n_joints, dim=3, link_len=1.0):
    """Serial chain of revolute joints about z, each link_len apart along x."""
    joints = []
    shapes = []
    for i in range(n_joints):
        joints.append(Joint("revolute", offset_x(link_len if i else 0.0, dim),
                            np.array([0.0, 0.0, 1.0]) if dim == 3 else None,
                            -math.pi, math.pi))
        shapes.append([Sphere(np.r_[link_len, np.zeros(dim - 1)], 0.1)])
    return RobotModel(joints, shapes, Pose.identity(dim))


def fk_oracle(robot, theta):
    """Independent homogeneous-transform chain product."""
    dim = robot.dim
    T = np.eye(dim + 1)
    T[:dim, :dim] = robot.base.rotation
    T[:dim, dim] = robot.base.translation
    out = []
    for joint, q in zip(robot.joints, theta):
        O = np.eye(dim + 1)
        O[:dim, :dim] = joint.offset.rotation
        O[:dim, dim] = joint.offset.translation
        M = np.eye(dim + 1)
        if joint.kind == "prismatic":
            M[:dim, dim] = q * joint.axis
        else:
            c, s = math.cos(q), math.sin(q)
            if dim == 2:
                M[:2, :2] = [[c, -s], [s, c]]
            else:
                a = joint.axis
                K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]],
                              [-a[1], a[0], 0]])
                M[:3, :3] = np.eye(3) + s * K + (1 - c) * (K @ K)
        T = T @ O @ M
        out.append(T.copy())
    return out


class TestForwardKinematics:
    def test_zero_configuration_two_link(self):
        robot = make_chain(2)
        poses = forward_kinematics(robot, [0.0, 0.0])
        np.testing.assert_allclose(poses[0].translation, [0, 0, 0], atol=1e-12)
        np.testing.assert_allclose(poses[1].translation, [1, 0, 0], atol=1e-12)

    def test_quarter_turn(self):
        joints = [Joint("revolute", Pose.identity(3), np.array([0, 0, 1.0]))]
        child = Sphere([1.0, 0, 0], 0.1)
        robot = RobotModel(joints, [[child]], Pose.identity(3))
        poses = forward_kinematics(robot, [math.pi / 2])
        np.testing.assert_allclose(poses[0].apply([1.0, 0, 0]), [0, 1, 0],
                                   atol=1e-12)

    def test_matches_transform_chain_oracle(self):
        rng = np.random.default_rng(0)
        robot = make_chain(3)
        for _ in range(20):
            th = rng.uniform(-math.pi, math.pi, size=3)
            poses = forward_kinematics(robot, th)
            oracle = fk_oracle(robot, th)
            for p, T in zip(poses, oracle):
                np.testing.assert_allclose(p.rotation, T[:3, :3], atol=1e-12)
                np.testing.assert_allclose(p.translation, T[:3, 3], atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            forward_kinematics(make_chain(2), [0.0])

    def test_planar_point_robot(self):
        robot = planar_point_robot()
        poses = forward_kinematics(robot, [0.3, -0.7])
        np.testing.assert_allclose(poses[1].translation, [0.3, -0.7])
        shapes = posed_link_shapes(robot, poses)
        assert len(shapes) == 1
        link_idx, body = shapes[0]
        np.testing.assert_allclose(body.center(), [0.3, -0.7])


class TestPointJacobian:
    def test_revolute_about_z(self):
        joints = [Joint("revolute", Pose.identity(3), np.array([0, 0, 1.0]))]
        robot = RobotModel(joints, [[Sphere([1, 0, 0], 0.1)]], Pose.identity(3))
        J = point_jacobian(robot, [0.0], 0, [1.0, 0.0, 0.0])
        np.testing.assert_allclose(J[:, 0], [0, 1, 0], atol=1e-12)

    def test_prismatic(self):
        joints = [Joint("prismatic", Pose.identity(3), np.array([1.0, 0, 0]))]
        robot = RobotModel(joints, [[Sphere([0, 0, 0], 0.1)]], Pose.identity(3))
        J = point_jacobian(robot, [0.4], 0, [5.0, 2.0, -1.0])
        np.testing.assert_allclose(J[:, 0], [1, 0, 0], atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        robot = make_chain(3)
        h = 1e-6
        for _ in range(20):
            th = rng.uniform(-1.5, 1.5, size=3)
            link = int(rng.integers(0, 3))
            local = rng.normal(size=3) * 0.3
            poses = forward_kinematics(robot, th)
            p = poses[link].apply(local)
            J = point_jacobian(robot, th, link, p)
            for k in range(3):
                dp = np.zeros(3)
                dp[k] = h
                pp = forward_kinematics(robot, th + dp)[link].apply(local)
                pm = forward_kinematics(robot, th - dp)[link].apply(local)
                np.testing.assert_allclose(J[:, k], (pp - pm) / (2 * h),
                                           atol=1e-6)

    def test_chain_locality(self):
        robot = make_chain(3)
        th = np.array([0.3, -0.2, 0.9])
        poses = forward_kinematics(robot, th)
        p = poses[0].apply([0.5, 0.1, 0.0])
        J = point_jacobian(robot, th, 0, p)
        np.testing.assert_allclose(J[:, 1:], 0.0, atol=1e-12)
        # Moving a distal joint leaves the attached point fixed.
        th2 = th + np.array([0.0, 0.5, -0.3])
        p2 = forward_kinematics(robot, th2)[0].apply([0.5, 0.1, 0.0])
        np.testing.assert_allclose(p, p2, atol=1e-12)

    def test_jacobian_step_consistency(self):
        rng = np.random.default_rng(2)
        robot = make_chain(3, link_len=0.3)  # desk-scale chain
        for _ in range(100):
            th = rng.uniform(-1.5, 1.5, size=3)
            link = int(rng.integers(0, 3))
            local = rng.normal(size=3) * 0.05
            poses = forward_kinematics(robot, th)
            p = poses[link].apply(local)
            J = point_jacobian(robot, th, link, p)
            dth = rng.normal(size=3)
            dth *= 1e-4 / np.linalg.norm(dth)
            p2 = forward_kinematics(robot, th + dth)[link].apply(local)
            err = np.linalg.norm(J @ dth - (p2 - p))
            assert err <= 1e-8 + 1e-4 * np.linalg.norm(dth) ** 2

    def test_invalid_link_index(self):
        robot = make_chain(2)
        with pytest.raises(ValueError):
            point_jacobian(robot, [0.0, 0.0], 5, [0, 0, 0])

    def test_2d_revolute_jacobian(self):
        joints = [Joint("revolute", Pose.identity(2))]
        robot = RobotModel(joints, [[point_body([1.0, 0.0])]], Pose.identity(2))
        J = point_jacobian(robot, [0.0], 0, [1.0, 0.0])
        np.testing.assert_allclose(J[:, 0], [0, 1], atol=1e-12)
        # Finite difference check at a nonzero angle.
        h = 1e-6
        th = 0.7
        J = point_jacobian(robot, [th],
                           0, forward_kinematics(robot, [th])[0].apply([1, 0]))
        pp = forward_kinematics(robot, [th + h])[0].apply([1, 0])
        pm = forward_kinematics(robot, [th - h])[0].apply([1, 0])
        np.testing.assert_allclose(J[:, 0], (pp - pm) / (2 * h), atol=1e-6)
