"""Head pose from 2D-3D landmark correspondences.

The solver picks a closed-form initialiser from the geometry of the object
points and then polishes it with Levenberg-style damped Gauss-Newton:

* non-planar points: EPnP (four control points, barycentric weights, null
  space of the projection system, then a rigid fit);
* planar points (smallest centred singular value below 1e-6 of the
  largest): homography between the object plane and normalised image
  coordinates, decomposed into a rotation and translation.

Refinement updates ``R <- exp([w]x) R`` and ``t <- t + dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .camera import CameraIntrinsics, project
from .errors import DegenerateConfigurationError, DivergenceError, InsufficientPointsError
from .transforms import FrameId, TaggedTransform, axis_angle_to_matrix

PLANAR_RATIO = 1e-6
COLLINEAR_RATIO = 1e-9
# Hypotheses whose RMS agree to this relative precision count as tied.
TIE_RTOL = 1e-9
MAX_DAMPING = 1e16

__all__ = [
    "Correspondence",
    "PnPConfig",
    "PnPSolution",
    "solve_pnp",
    "reprojection_residuals",
    "rms",
]


@dataclass(frozen=True, eq=False)
class Correspondence:
    id: str
    object: NDArray[np.float64]
    image: NDArray[np.float64]

    def __post_init__(self) -> None:
        obj = np.array(self.object, dtype=float).reshape(3)
        img = np.array(self.image, dtype=float).reshape(2)
        if not (np.all(np.isfinite(obj)) and np.all(np.isfinite(img))):
            raise ValueError(f"correspondence {self.id!r} has non-finite coordinates")
        obj.setflags(write=False)
        img.setflags(write=False)
        object.__setattr__(self, "object", obj)
        object.__setattr__(self, "image", img)


@dataclass(frozen=True)
class PnPConfig:
    max_iterations: int = 50
    convergence_tol: float = 1e-10
    damping_init: float = 1e-3
    min_points: int = 6

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.convergence_tol > 0 and self.damping_init > 0):
            raise ValueError("convergence_tol and damping_init must be > 0")
        if self.min_points < 4:
            raise ValueError("min_points must be >= 4")


@dataclass(frozen=True, eq=False)
class PnPSolution:
    pose: TaggedTransform
    reprojection_rms: float
    iterations: int
    converged: bool
    init_method: str


def rms(residuals: ArrayLike) -> float:
    r = np.asarray(residuals, dtype=float)
    return math.sqrt(float(np.sum(r * r)) / max(len(r), 1))


def reprojection_residuals(
    pose: TaggedTransform, correspondences: Sequence[Correspondence], intr: CameraIntrinsics
) -> NDArray[np.float64]:
    """Projected minus observed pixels, shape (N, 2)."""
    if (pose.src, pose.dst) != (FrameId.HEAD, FrameId.CAMERA):
        raise ValueError(f"pose must be tagged H->C, got {pose.tag}")
    obj = np.array([c.object for c in correspondences]).reshape(-1, 3)
    img = np.array([c.image for c in correspondences]).reshape(-1, 2)
    return project(intr, pose.apply(obj)) - img


# ---------------------------------------------------------------------------
# small linear-algebra helpers


def _nearest_rotation(m: NDArray[np.float64]) -> NDArray[np.float64]:
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _rigid_fit(src: NDArray[np.float64], dst: NDArray[np.float64]):
    """Least-squares R, t with ``dst ~ R src + t`` (Kabsch, no scale)."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, cd - r @ cs


def _raw_residuals(r, t, obj, img, intr: CameraIntrinsics) -> NDArray[np.float64]:
    pc = obj @ r.T + t
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * pc[:, 0] / z + intr.cx
        v = intr.fy * pc[:, 1] / z + intr.cy
    return np.column_stack([u, v]) - img


def _hypothesis_key(r, t, obj, img, intr):
    pc = obj @ r.T + t
    n_front = int(np.sum(pc[:, 2] > 0))
    err = rms(_raw_residuals(r, t, obj, img, intr))
    if not math.isfinite(err):
        err = math.inf
    return err, n_front


def _pick_hypothesis(hyps, obj, img, intr):
    """Lowest RMS wins; near-exact ties go to the hypothesis with more points in front."""
    scored = [(h, *_hypothesis_key(*h, obj, img, intr)) for h in hyps]
    best = scored[0]
    for cand in scored[1:]:
        _, err, front = cand
        _, best_err, best_front = best
        tied = math.isclose(err, best_err, rel_tol=TIE_RTOL, abs_tol=1e-12)
        if (tied and front > best_front) or (not tied and err < best_err):
            best = cand
    return best[0]


# ---------------------------------------------------------------------------
# EPnP initialisation (non-planar)

_PAIRS = list(combinations(range(4), 2))
# beta products in L-matrix column order: b11 b12 b22 b13 b23 b33 b14 b24 b34 b44
_BETA_PRODUCTS = [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2), (0, 3), (1, 3), (2, 3), (3, 3)]


def _l_matrix(kernel: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rows: control-point pairs; columns: coefficients of beta_a * beta_b."""
    v = kernel.reshape(4, 4, 3)  # kernel vector, control point, xyz
    L = np.zeros((6, 10))
    for row, (i, j) in enumerate(_PAIRS):
        dv = v[:, i] - v[:, j]
        for col, (a, b) in enumerate(_BETA_PRODUCTS):
            dot = float(dv[a] @ dv[b])
            L[row, col] = dot if a == b else 2.0 * dot
    return L


def _beta_vector(beta: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.array([beta[a] * beta[b] for a, b in _BETA_PRODUCTS])


def _leading_betas(b11: float, b12: float, b22: float) -> tuple[float, float]:
    if b11 < 0:
        beta1 = math.sqrt(-b11)
        beta2 = math.sqrt(-b22) if b22 < 0 else 0.0
    else:
        beta1 = math.sqrt(b11)
        beta2 = math.sqrt(b22) if b22 > 0 else 0.0
    if b12 < 0:
        beta1 = -beta1
    return beta1, beta2


def _initial_betas(L, rho, kernel):
    out = []
    # one kernel vector: scale matching control-point distances
    v1 = kernel[0].reshape(4, 3)
    dc = np.array([np.linalg.norm(v1[i] - v1[j]) for i, j in _PAIRS])
    dw = np.sqrt(rho)
    out.append(np.array([dc @ dw / (dc @ dc), 0.0, 0.0, 0.0]))

    # all four kernel vectors, linearised on b11 b12 b13 b14
    b = np.linalg.lstsq(L[:, [0, 1, 3, 6]], rho, rcond=None)[0]
    beta1 = math.sqrt(abs(b[0]))
    if b[0] < 0:
        beta1 = -beta1
    if beta1 != 0:
        out.append(np.array([beta1, b[1] / beta1, b[2] / beta1, b[3] / beta1]))

    # two kernel vectors: b11 b12 b22
    b = np.linalg.lstsq(L[:, [0, 1, 2]], rho, rcond=None)[0]
    beta1, beta2 = _leading_betas(*b)
    out.append(np.array([beta1, beta2, 0.0, 0.0]))

    # three kernel vectors: b11 b12 b22 b13 b23
    b = np.linalg.lstsq(L[:, [0, 1, 2, 3, 4]], rho, rcond=None)[0]
    beta1, beta2 = _leading_betas(b[0], b[1], b[2])
    beta3 = b[3] / beta1 if beta1 != 0 else 0.0
    out.append(np.array([beta1, beta2, beta3, 0.0]))
    return out


def _refine_betas(beta, L, rho, iterations=5):
    """Gauss-Newton on the six control-point distance constraints."""
    beta = beta.copy()
    for _ in range(iterations):
        err = rho - L @ _beta_vector(beta)
        jac = np.zeros((6, 4))
        for col, (a, b) in enumerate(_BETA_PRODUCTS):
            jac[:, a] += L[:, col] * beta[b]
            jac[:, b] += L[:, col] * beta[a]
        step, *_ = np.linalg.lstsq(jac, err, rcond=None)
        beta = beta + step
    return beta


def _epnp(obj, img, intr: CameraIntrinsics):
    n = len(obj)
    c0 = obj.mean(axis=0)
    centred = obj - c0
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    ctrl_w = np.vstack([c0, c0 + (s[:, None] / math.sqrt(n)) * vt])
    alphas_rest = np.linalg.solve((ctrl_w[1:] - c0).T, centred.T).T
    alphas = np.column_stack([1.0 - alphas_rest.sum(axis=1), alphas_rest])

    M = np.zeros((2 * n, 12))
    du = intr.cx - img[:, 0]
    dv = intr.cy - img[:, 1]
    for j in range(4):
        M[0::2, 3 * j] = alphas[:, j] * intr.fx
        M[0::2, 3 * j + 2] = alphas[:, j] * du
        M[1::2, 3 * j + 1] = alphas[:, j] * intr.fy
        M[1::2, 3 * j + 2] = alphas[:, j] * dv
    _, _, vt_m = np.linalg.svd(M, full_matrices=True)
    kernel = vt_m[::-1][:4]  # smallest singular value first

    L = _l_matrix(kernel)
    rho = np.array([np.sum((ctrl_w[i] - ctrl_w[j]) ** 2) for i, j in _PAIRS])

    hyps = []
    for beta in _initial_betas(L, rho, kernel):
        beta = _refine_betas(beta, L, rho)
        ctrl_c = (beta @ kernel).reshape(4, 3)
        pts_c = alphas @ ctrl_c
        if np.mean(pts_c[:, 2]) < 0:
            pts_c = -pts_c
        if not np.all(np.isfinite(pts_c)):
            continue
        hyps.append(_rigid_fit(obj, pts_c))
    if not hyps:
        raise DivergenceError("EPnP produced no finite hypothesis")
    return _pick_hypothesis(hyps, obj, img, intr)


# ---------------------------------------------------------------------------
# homography initialisation (planar)


def _normalise_2d(p):
    c = p.mean(axis=0)
    d = np.mean(np.linalg.norm(p - c, axis=1))
    s = math.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _dlt_homography(src, dst):
    """Normalised DLT for ``dst ~ H src`` with 2D point arrays (N, 2)."""
    ts, td = _normalise_2d(src), _normalise_2d(dst)
    sh = np.column_stack([src, np.ones(len(src))]) @ ts.T
    dh = np.column_stack([dst, np.ones(len(dst))]) @ td.T
    rows = []
    for (x, y, w), (u, v, q) in zip(sh, dh):
        rows.append([0, 0, 0, -q * x, -q * y, -q * w, v * x, v * y, v * w])
        rows.append([q * x, q * y, q * w, 0, 0, 0, -u * x, -u * y, -u * w])
    _, _, vt = np.linalg.svd(np.asarray(rows, dtype=float))
    hn = vt[-1].reshape(3, 3)
    return np.linalg.inv(td) @ hn @ ts


def _homography_pose(obj, img, intr: CameraIntrinsics):
    c = obj.mean(axis=0)
    _, _, vt = np.linalg.svd(obj - c)
    e1, e2 = vt[0], vt[1]
    basis = np.column_stack([e1, e2, np.cross(e1, e2)])  # plane -> object, det +1
    plane_xy = ((obj - c) @ basis)[:, :2]

    rays = np.column_stack([img, np.ones(len(img))]) @ intr.K_inv.T
    h = _dlt_homography(plane_xy, rays[:, :2] / rays[:, 2:3])
    h1, h2, h3 = h[:, 0], h[:, 1], h[:, 2]
    lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))

    hyps = []
    for sign in (1.0, -1.0):
        r1, r2 = sign * lam * h1, sign * lam * h2
        r_plane = _nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
        t_plane = sign * lam * h3
        r = r_plane @ basis.T
        hyps.append((r, t_plane - r @ c))
    return _pick_hypothesis(hyps, obj, img, intr)


# ---------------------------------------------------------------------------
# refinement


def _jacobian(r, t, obj, intr: CameraIntrinsics):
    rotated = obj @ r.T
    pc = rotated + t
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    n = len(obj)
    dproj = np.zeros((n, 2, 3))
    dproj[:, 0, 0] = intr.fx / z
    dproj[:, 0, 2] = -intr.fx * x / z**2
    dproj[:, 1, 1] = intr.fy / z
    dproj[:, 1, 2] = -intr.fy * y / z**2
    # d(exp([w]x) R X)/dw at w = 0 is -[R X]x
    skew = np.zeros((n, 3, 3))
    skew[:, 0, 1], skew[:, 0, 2] = -rotated[:, 2], rotated[:, 1]
    skew[:, 1, 0], skew[:, 1, 2] = rotated[:, 2], -rotated[:, 0]
    skew[:, 2, 0], skew[:, 2, 1] = -rotated[:, 1], rotated[:, 0]
    j_rot = -dproj @ skew
    return np.concatenate([j_rot, dproj], axis=2).reshape(2 * n, 6)


def _apply_step(r, t, step):
    return axis_angle_to_matrix(step[:3]) @ r, t + step[3:]


def _cost(r, t, obj, img, intr):
    if np.any((obj @ r.T + t)[:, 2] <= 0):
        return math.inf, None
    res = _raw_residuals(r, t, obj, img, intr).reshape(-1)
    if not np.all(np.isfinite(res)):
        return math.inf, None
    return float(res @ res), res


def _refine(r, t, obj, img, intr: CameraIntrinsics, cfg: PnPConfig):
    n = len(obj)
    cost, res = _cost(r, t, obj, img, intr)
    if res is None:
        raise DivergenceError("initial pose gives non-finite residuals or points behind the camera")
    lam = cfg.damping_init
    converged = False
    iterations = 0
    while iterations < cfg.max_iterations:
        iterations += 1
        jac = _jacobian(r, t, obj, intr)
        jtj = jac.T @ jac
        grad = jac.T @ res
        try:
            step = np.linalg.solve(jtj + lam * np.eye(6), -grad)
        except np.linalg.LinAlgError:
            raise DivergenceError("singular normal equations") from None
        if not np.all(np.isfinite(step)):
            raise DivergenceError("non-finite update step")
        r_new, t_new = _apply_step(r, t, step)
        new_cost, new_res = _cost(r_new, t_new, obj, img, intr)

        old_rms = math.sqrt(cost / n)
        if new_cost <= cost:
            change = old_rms - math.sqrt(new_cost / n)
            r, t, cost, res = r_new, t_new, new_cost, new_res
            lam = max(lam / 10.0, 1e-12)
        else:
            change = math.sqrt(new_cost / n) - old_rms if math.isfinite(new_cost) else math.inf
            lam *= 10.0
        if change < cfg.convergence_tol:
            converged = True
            break
        if lam > MAX_DAMPING:
            break
    return r, t, iterations, converged


def solve_pnp(
    correspondences: Sequence[Correspondence],
    intr: CameraIntrinsics,
    cfg: PnPConfig | None = None,
) -> PnPSolution:
    """Estimate ``T_C<-H`` minimising squared reprojection error.

    Raises:
        InsufficientPointsError: fewer than ``cfg.min_points`` correspondences
            (4 suffice when the object points are planar).
        DegenerateConfigurationError: object points are collinear.
        DivergenceError: residuals become non-finite.
    """
    cfg = cfg or PnPConfig()
    n = len(correspondences)
    if n < 4:
        raise InsufficientPointsError(f"PnP needs at least 4 correspondences, got {n}")
    obj = np.array([c.object for c in correspondences], dtype=float)
    img = np.array([c.image for c in correspondences], dtype=float)

    s = np.linalg.svd(obj - obj.mean(axis=0), compute_uv=False)
    if s[0] == 0 or s[1] <= COLLINEAR_RATIO * s[0]:
        raise DegenerateConfigurationError("object points are collinear or coincident")
    planar = s[2] < PLANAR_RATIO * s[0]
    required = 4 if planar else cfg.min_points
    if n < required:
        raise InsufficientPointsError(
            f"PnP needs at least {required} correspondences for "
            f"{'planar' if planar else 'non-planar'} objects, got {n}"
        )

    if planar:
        r0, t0 = _homography_pose(obj, img, intr)
        method = "homography"
    else:
        r0, t0 = _epnp(obj, img, intr)
        method = "epnp"

    r, t, iterations, converged = _refine(r0, t0, obj, img, intr, cfg)
    pose = TaggedTransform.from_rt(_nearest_rotation(r), t, FrameId.HEAD, FrameId.CAMERA)
    final_rms = rms(_raw_residuals(pose.rotation, pose.translation, obj, img, intr))
    if not math.isfinite(final_rms):
        raise DivergenceError("final residuals are non-finite")
    return PnPSolution(pose, final_rms, iterations, converged, method)
