"""Monte Carlo ground truth for collision risk and shadow containment.

Obstacle positions are uncertain but static: each trial draws one Gaussian
displacement per obstacle and holds it fixed along the whole trajectory.
Random streams are counter-based (Philox) keyed by (seed, obstacle index), so
reports are bit-reproducible and trials can be partitioned across workers.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .geometry import MinkowskiSum, _gjk
from .kinematics import forward_kinematics, posed_link_shapes
from .planner import CONVERGED, ITERATION_LIMIT, solve

# Margin growth step for iterative risk allocation, as a multiple of the
# obstacle's largest displacement standard deviation.
IRA_MARGIN_ETA = 0.5

# Fixed support-direction counts for the generic containment test.
CONTAINMENT_DIRECTIONS_2D = 32
CONTAINMENT_DIRECTIONS_3D = 64


@dataclass
class MonteCarloReport:
    sample_count: int
    hit_count: int
    estimate: float
    standard_error: float
    seed: int
    direction_count: int = None   # set by containment reports

    def to_dict(self):
        return {
            "sampleCount": self.sample_count,
            "hitCount": self.hit_count,
            "estimate": self.estimate,
            "standardError": self.standard_error,
            "seed": self.seed,
            **({"directionCount": self.direction_count}
               if self.direction_count is not None else {}),
        }


def _report(n, hits, seed, directions=None):
    p = hits / n
    se = math.sqrt(p * (1.0 - p) / n)
    return MonteCarloReport(n, int(hits), float(p), float(se), int(seed),
                            directions)


def _displacements(obstacle, n, seed, obstacle_index):
    gen = np.random.Generator(
        np.random.Philox(key=np.uint64([seed, obstacle_index])))
    z = gen.standard_normal(size=(n, obstacle.dim))
    return z @ obstacle.chol.T


def _point_polytope_hits(D, W, radius, candidates):
    """Which displacement rows of ``D[candidates]`` lie within ``radius`` of
    conv(W). Returns a boolean array over ``candidates``.

    Vectorized exact paths for 1- and 2-point hulls; larger hulls use a
    vertex-distance upper bound and a facet-plane lower bound to classify
    most samples, with a per-sample GJK only for the ambiguous band.
    """
    d = D[candidates]
    m = W.shape[0]
    if m == 1:
        return np.linalg.norm(d - W[0], axis=1) <= radius
    if m == 2:
        e = W[1] - W[0]
        ee = float(e @ e)
        if ee < 1e-30:
            return np.linalg.norm(d - W[0], axis=1) <= radius
        t = np.clip((d - W[0]) @ e / ee, 0.0, 1.0)
        proj = W[0] + t[:, None] * e
        return np.linalg.norm(d - proj, axis=1) <= radius

    # Certain hits: within radius of some vertex.
    dist_v = np.min(
        np.linalg.norm(d[:, None, :] - W[None, :, :], axis=2), axis=1)
    hit = dist_v <= radius
    # Certain misses: some supporting facet plane puts the sample beyond
    # radius (a valid lower bound on the distance to the hull).
    lower = np.zeros(len(d))
    normals = _hull_facet_normals(W)
    if normals is not None:
        A, b = normals
        lower = np.max(d @ A.T - b, axis=1)
        lower = np.maximum(lower, 0.0)
    ambiguous = np.flatnonzero(~hit & (lower <= radius))
    for i in ambiguous:
        di = d[i]

        def sp(v):
            j = int(np.argmax(W @ v))
            return W[j] - di, None, None

        dist, *_ = _gjk(sp, W.shape[1], seed_direction=W.mean(axis=0) - di,
                        boolean_cutoff=radius + 1e-9)
        hit[i] = dist <= radius + 1e-9
    return hit


def _hull_facet_normals(W):
    """Outward facet planes (A, b) with A x <= b on conv(W), or None."""
    from scipy.spatial import ConvexHull, QhullError
    try:
        hull = ConvexHull(W)
    except QhullError:
        return None
    eq = hull.equations  # rows [normal, offset] with normal.x + offset <= 0
    return eq[:, :-1], -eq[:, -1]


def monte_carlo_risk(robot, trajectory, obstacles, n_samples, seed):
    """Estimate the probability that the swept trajectory hits any obstacle.

    A trial is a joint draw of one displacement per obstacle; it counts as a
    hit if any timestep configuration intersects any displaced obstacle.
    """
    if n_samples < 1:
        raise ValueError("sample count must be >= 1")
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    shapes_per_t = []
    for theta in traj:
        poses = forward_kinematics(robot, theta)
        shapes_per_t.append([body.swept()
                             for _, body in posed_link_shapes(robot, poses)])

    hit = np.zeros(n_samples, dtype=bool)
    for oi, ob in enumerate(obstacles):
        sw = ob.nominal.swept()
        if sw is None:
            raise ValueError("Monte Carlo requires sphere-swept obstacle "
                             "geometry")
        Vn, rn = sw
        D = _displacements(ob, n_samples, seed, oi)
        for shapes in shapes_per_t:
            for Vt, rt in shapes:
                alive = np.flatnonzero(~hit)
                if alive.size == 0:
                    break
                W = (Vt[:, None, :] - Vn[None, :, :]).reshape(-1, Vt.shape[1])
                hit[alive] |= _point_polytope_hits(D, W, rt + rn, alive)
    return _report(n_samples, int(hit.sum()), seed)


def _pair_hit_estimates(robot, trajectory, obstacles, n_samples, seed):
    """Sampled hit probability per (timestep, obstacle) plus the joint
    trajectory-level estimate, all from shared displacement draws."""
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    T = len(traj)
    shapes_per_t = []
    for theta in traj:
        poses = forward_kinematics(robot, theta)
        shapes_per_t.append([body.swept()
                             for _, body in posed_link_shapes(robot, poses)])
    probs = np.zeros((T, len(obstacles)))
    any_hit = np.zeros(n_samples, dtype=bool)
    everything = np.arange(n_samples)
    for oi, ob in enumerate(obstacles):
        Vn, rn = ob.nominal.swept()
        D = _displacements(ob, n_samples, seed, oi)
        for t, shapes in enumerate(shapes_per_t):
            hit_t = np.zeros(n_samples, dtype=bool)
            for Vt, rt in shapes:
                W = (Vt[:, None, :] - Vn[None, :, :]).reshape(-1, Vt.shape[1])
                hit_t |= _point_polytope_hits(D, W, rt + rn, everything)
            probs[t, oi] = hit_t.mean()
            any_hit |= hit_t
    return probs, float(any_hit.mean())


def risk_blind_plan(problem, config=None):
    """Baseline planner that ignores obstacle uncertainty entirely.

    Runs the same sequential convex optimization with only the
    signed-distance and endpoint constraints: no risk rows, no allocation.
    The returned result's certified risks are zero by construction (nothing
    was certified); validate the trajectory with ``monte_carlo_risk``.
    """
    return solve(problem, config, include_risk=False)


def ira_plan(problem, config=None, sample_count=1000, max_rounds=10, seed=0):
    """Iterative risk allocation baseline.

    Alternates deterministic solves (signed-distance constraints with
    per-(timestep, obstacle) margins) with sampling-based risk estimation.
    Whenever the estimated trajectory risk exceeds the budget, margins grow
    by ``IRA_MARGIN_ETA * sigma_max`` on every pair whose sampled risk share
    exceeds its uniform allocation, and the problem is re-solved. Terminates
    when the *estimated* risk satisfies the budget (which a larger
    independent sample may contradict) or after ``max_rounds``.

    The per-round estimates are appended to the result's iteration log as
    entries with a "round" key.
    """
    if sample_count < 1:
        raise ValueError("sample count must be >= 1")
    if max_rounds < 1:
        raise ValueError("round count must be >= 1")
    T = problem.timesteps
    n_obs = len(problem.obstacles)
    margins = np.full((T, n_obs), problem.margin)
    sigma_max = np.array([
        math.sqrt(float(np.linalg.eigvalsh(ob.covariance)[-1]))
        for ob in problem.obstacles])
    uniform = problem.risk_budget / max(T * n_obs, 1)

    result = None
    rounds = []
    for rnd in range(max_rounds):
        result = solve(problem, config, include_risk=False, margins=margins)
        if n_obs == 0:
            rounds.append({"round": rnd, "estimated_risk": 0.0,
                           "margin_max": float(margins.max(initial=0.0))})
            break
        probs, estimate = _pair_hit_estimates(
            problem.robot, result.trajectory, problem.obstacles,
            sample_count, seed)
        rounds.append({"round": rnd, "estimated_risk": estimate,
                       "margin_max": float(margins.max())})
        if estimate <= problem.risk_budget:
            break
        margins += (probs > uniform) * sigma_max[None, :] * IRA_MARGIN_ETA
    satisfied = rounds[-1]["estimated_risk"] <= problem.risk_budget
    if result.status == CONVERGED and not satisfied:
        result.status = ITERATION_LIMIT
    result.iterations = result.iterations + rounds
    return result


def _support_directions(dim):
    if dim == 2:
        ang = 2 * np.pi * np.arange(CONTAINMENT_DIRECTIONS_2D) \
            / CONTAINMENT_DIRECTIONS_2D
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # Deterministic Fibonacci-sphere directions.
    k = np.arange(CONTAINMENT_DIRECTIONS_3D)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    z = 1.0 - 2.0 * (k + 0.5) / CONTAINMENT_DIRECTIONS_3D
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _vectorized_membership(body, D, tol=1e-9):
    """Exact per-sample membership d in `body` for known body families.

    Returns a boolean array or None when no closed form applies.
    """
    from .geometry import Ellipsoid, HalfEllipsoid
    if isinstance(body, Ellipsoid):
        y = solve_triangular(body.chol, (D - body.center()).T, lower=True)
        return np.einsum("ij,ij->j", y, y) <= body.c + tol
    if isinstance(body, HalfEllipsoid):
        inner = _vectorized_membership(body.ellipsoid, D, tol)
        return inner & (D @ body.normal >= -tol)
    return None


def monte_carlo_containment(obstacle, body, n_samples, seed,
                            obstacle_index=0):
    """Estimate P(displaced obstacle entirely inside ``body``).

    For a convex obstacle O and convex body, O + d is contained in O + B
    exactly when d lies in B, so shadow-shaped bodies (the obstacle's own
    geometry Minkowski-summed with a displacement set) are tested in closed
    form. Other bodies fall back to support-point membership over a fixed
    deterministic direction set, a sound desk-scale approximation whose
    direction count is recorded in the report.
    """
    if n_samples < 1:
        raise ValueError("sample count must be >= 1")
    D = _displacements(obstacle, n_samples, seed, obstacle_index)

    if isinstance(body, MinkowskiSum) and body.a is obstacle.nominal:
        inside = _vectorized_membership(body.b, D)
        if inside is not None:
            return _report(n_samples, int(inside.sum()), seed)

    dirs = _support_directions(obstacle.dim)
    supports = np.stack([obstacle.nominal.support(u) for u in dirs])
    contained = np.zeros(n_samples, dtype=bool)
    for i in range(n_samples):
        contained[i] = all(
            _point_in_body(s + D[i], body) for s in supports)
    return _report(n_samples, int(contained.sum()), seed,
                   directions=len(dirs))


def _point_in_body(p, body, tol=1e-9):
    contains = getattr(body, "contains", None)
    if contains is not None:
        return bool(contains(p, tol))

    def sp(v):
        return p - body.support(-v), None, None

    dist, *_ = _gjk(sp, body.dim, seed_direction=p - body.center(),
                    boolean_cutoff=tol)
    return dist <= tol
