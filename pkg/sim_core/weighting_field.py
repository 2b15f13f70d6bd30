# ------------------------------------------------------------------------------------
# ⚡ weighting_field.py – Induced-Charge Response α(r) of a Qubit Island
#
# Solves the weighting potential (island at 1, every other conductor at 0) on a local
# subdomain around one qubit, in a two-layer dielectric: substrate (ε_r) below the metalized
# surface, vacuum above it up to a grounded lid.
#
# ✅ GridSpec – grid spacing, subdomain size, solver knobs
# ✅ solve_weighting() – finite-difference Laplace, red-black SOR, coarse-to-fine start
# ✅ alpha_at() / alpha_values() – trilinear lookups (single point / vectorized)
# ✅ grad_alpha_at() / grad_alpha_values() – central differences of the interpolated field
# ✅ load_or_solve() – .npz cache keyed by a hash of layout + qubit + grid spec
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import map_coordinates

from shared.logging_utils import get_logger, log_debug, log_info, log_success
from sim_core.errors import ConvergenceError, GeometryError, OutOfBoundsError
from sim_core.geometry_layout import ChipLayout, layout_to_dict

FIELD_CACHE_VERSION = 1
MIN_GAP_NODES = 4

# Gradient lookup status codes
GRAD_OK = 0
GRAD_OUTSIDE = 1      # outside the subdomain: α ≡ 0 there, gradient is zero
GRAD_NEAR_WALL = 2    # inside, but within one cell of a wall: unavailable


@dataclass(frozen=True)
class GridSpec:
    spacing_xy: float = 5.0
    spacing_z: float = 3.71
    half_width: float = 1000.0
    cap_height: float = 500.0
    tolerance: float = 1.0e-6
    max_iterations: int = 20000
    omega: float = 1.9
    coarse_levels: int = 2
    check_every: int = 25
    lateral_boundary: Literal["grounded", "reflecting"] = "grounded"

    def __post_init__(self):
        if self.spacing_xy <= 0 or self.spacing_z <= 0:
            raise GeometryError("grid spacings must be positive")
        if self.half_width <= 0 or self.cap_height <= 0:
            raise GeometryError("subdomain half-width and cap height must be positive")
        if not (0 < self.omega < 2):
            raise GeometryError("over-relaxation factor must lie in (0, 2)")
        if self.lateral_boundary not in ("grounded", "reflecting"):
            raise GeometryError(f"unknown lateral boundary {self.lateral_boundary!r}")

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "GridSpec":
        names = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in cfg.items() if k in names})


@dataclass(frozen=True, eq=False)
class WeightingGrid:
    """Solved α on a regular node grid; values[i, j, k] sits at origin + (i, j, k) * spacing."""
    qubit_id: str
    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray
    residual: float
    iterations: int = 0
    surface_index: int = 0
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.values.shape)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.spacing * (np.array(self.values.shape) - 1)

    @property
    def surface_z(self) -> float:
        return float(self.origin[2] + self.spacing[2] * self.surface_index)

    def axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(self.origin[d] + self.spacing[d] * np.arange(self.values.shape[d]) for d in range(3))

    def inside(self, points, margin: float = 0.0) -> np.ndarray:
        """Mask of points inside the grid box shrunk by `margin` cells on every side."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = self.origin + margin * self.spacing
        hi = self.upper - margin * self.spacing
        eps = 1e-9 * self.spacing
        return np.all((pts >= lo - eps) & (pts <= hi + eps), axis=1)


@dataclass
class _Problem:
    coords: Tuple[np.ndarray, np.ndarray, np.ndarray]
    fixed: np.ndarray            # bool, Dirichlet nodes
    fixed_values: np.ndarray
    c_lateral: np.ndarray        # per layer, ε/h_xy²
    c_down: np.ndarray           # per layer, ε of the link to k-1 over h_z²
    c_up: np.ndarray             # per layer, ε of the link to k+1 over h_z²
    surface_index: int
    spacing: np.ndarray


def _build_problem(layout: ChipLayout, qubit_id: str, spec: GridSpec,
                   spacing_xy: float, spacing_z: float) -> _Problem:
    sub = layout.substrate
    q = layout.qubit(qubit_id)
    cx, cy = q.center

    # Square subdomain centred on the island, clipped to the chip footprint.
    extent = min(spec.half_width, cx, sub.side_x - cx, cy, sub.side_y - cy)
    n_half = int(math.floor(extent / spacing_xy + 1e-9))
    if n_half * spacing_xy < q.cavity_radius_ro:
        raise GeometryError(f"{qubit_id}: subdomain does not enclose the cavity")
    offsets = spacing_xy * np.arange(-n_half, n_half + 1)
    xs, ys = cx + offsets, cy + offsets

    n_sub = max(1, int(round(sub.thickness_z0 / spacing_z)))
    hz = sub.thickness_z0 / n_sub
    n_cap = max(1, int(round(spec.cap_height / hz)))
    zs = hz * np.arange(n_sub + n_cap + 1)
    nz = zs.size

    eps_r = sub.relative_permittivity
    eps_layer = np.where(np.arange(nz) < n_sub, eps_r, 1.0)
    eps_layer[n_sub] = 0.5 * (eps_r + 1.0)
    eps_link = np.where(np.arange(nz - 1) < n_sub, eps_r, 1.0)   # link k -> k+1
    c_up = np.zeros(nz)
    c_down = np.zeros(nz)
    c_up[:-1] = eps_link / hz ** 2
    c_down[1:] = eps_link / hz ** 2
    c_lateral = eps_layer / spacing_xy ** 2

    shape = (xs.size, ys.size, nz)
    fixed = np.zeros(shape, dtype=bool)
    fixed_values = np.zeros(shape)
    fixed[:, :, 0] = True
    fixed[:, :, -1] = True
    if spec.lateral_boundary == "grounded":
        fixed[0, :, :] = fixed[-1, :, :] = True
        fixed[:, 0, :] = fixed[:, -1, :] = True

    rr = np.hypot(*np.meshgrid(offsets, offsets, indexing="ij"))
    island = rr <= q.island_radius_ri
    ground = rr >= q.cavity_radius_ro
    fixed[:, :, n_sub] |= island | ground
    fixed_values[:, :, n_sub] = np.where(island, 1.0, 0.0)

    return _Problem(
        coords=(xs, ys, zs),
        fixed=fixed,
        fixed_values=fixed_values,
        c_lateral=c_lateral,
        c_down=c_down,
        c_up=c_up,
        surface_index=n_sub,
        spacing=np.array([spacing_xy, spacing_xy, hz]),
    )


def _jacobi_estimate(phi: np.ndarray, prob: _Problem) -> np.ndarray:
    """Flux-balance estimate of every node from its six neighbours.

    Lateral ghosts mirror the first interior node, which is the reflecting-wall condition;
    grounded walls are fixed so their ghosts never matter.
    """
    p = np.pad(phi, ((1, 1), (1, 1), (0, 0)), mode="reflect")
    lateral = p[:-2, 1:-1, :] + p[2:, 1:-1, :] + p[1:-1, :-2, :] + p[1:-1, 2:, :]
    total = lateral * prob.c_lateral
    total[:, :, 1:] += phi[:, :, :-1] * prob.c_down[1:]
    total[:, :, :-1] += phi[:, :, 1:] * prob.c_up[:-1]
    denom = 4.0 * prob.c_lateral + prob.c_down + prob.c_up
    return total / denom


def _relax(prob: _Problem, phi: np.ndarray, tolerance: float, max_iterations: int,
           omega: float, check_every: int, label: str) -> Tuple[np.ndarray, float, int]:
    free = ~prob.fixed
    i, j, k = np.indices(phi.shape, sparse=True)
    parity = (i + j + k) % 2 == 0
    weights = [omega * (free & parity), omega * (free & ~parity)]
    phi = np.where(prob.fixed, prob.fixed_values, phi)

    trace: List[float] = []
    residual = math.inf
    for it in range(1, max_iterations + 1):
        for w in weights:
            phi += w * (_jacobi_estimate(phi, prob) - phi)
        if it % check_every == 0 or it == max_iterations:
            residual = float(np.max(np.abs(_jacobi_estimate(phi, prob) - phi)[free], initial=0.0))
            trace.append(residual)
            log_debug(f"{label} sweep {it}: residual {residual:.3e}", "weighting_field")
            if residual <= tolerance:
                return phi, residual, it
    raise ConvergenceError(f"{label}: no convergence after {max_iterations} sweeps", residual, trace)


def solve_weighting(layout: ChipLayout, qubit_id: str, grid_spec: GridSpec | None = None) -> WeightingGrid:
    """Solve α for one qubit on its local subdomain.

    Raises GeometryError when the island-ground gap is resolved by fewer than four nodes and
    ConvergenceError (carrying the last residual) when max_iterations is exhausted.
    """
    spec = grid_spec or GridSpec()
    q = layout.qubit(qubit_id)
    gap_nodes = (q.cavity_radius_ro - q.island_radius_ri) / spec.spacing_xy
    if gap_nodes < MIN_GAP_NODES:
        raise GeometryError(
            f"{qubit_id}: gap of {q.cavity_radius_ro - q.island_radius_ri:.1f} µm spans only "
            f"{gap_nodes:.1f} nodes at {spec.spacing_xy} µm spacing (need {MIN_GAP_NODES})"
        )

    logger = get_logger()
    phi: Optional[np.ndarray] = None
    prev: Optional[_Problem] = None
    total_iterations = 0
    for level in range(spec.coarse_levels, -1, -1):
        scale = 2 ** level
        prob = _build_problem(layout, qubit_id, spec, spec.spacing_xy * scale, spec.spacing_z * scale)
        if phi is None:
            start = np.zeros(prob.fixed.shape)
        else:
            interp = RegularGridInterpolator(prev.coords, phi, bounds_error=False, fill_value=None)
            mesh = np.stack(np.meshgrid(*prob.coords, indexing="ij"), axis=-1)
            start = interp(mesh.reshape(-1, 3)).reshape(prob.fixed.shape)
        tol = spec.tolerance if level == 0 else max(spec.tolerance, 1e-4)
        phi, residual, iterations = _relax(
            prob, start, tol, spec.max_iterations, spec.omega, spec.check_every,
            label=f"{qubit_id} level {level}",
        )
        total_iterations += iterations
        prev = prob
        log_info(
            f"{qubit_id}: level {level} grid {prob.fixed.shape} converged in {iterations} sweeps "
            f"(residual {residual:.2e})",
            "weighting_field", logger,
        )

    origin = np.array([prev.coords[0][0], prev.coords[1][0], prev.coords[2][0]])
    grid = WeightingGrid(
        qubit_id=qubit_id,
        origin=origin,
        spacing=prev.spacing.copy(),
        values=phi,
        residual=residual,
        iterations=total_iterations,
        surface_index=prev.surface_index,
        meta={"grid_spec": asdict(spec)},
    )
    log_success(f"α solved for {qubit_id} ({total_iterations} sweeps)", "weighting_field", logger)
    return grid


# === Lookups ===

def _to_index(grid: WeightingGrid, points: np.ndarray) -> np.ndarray:
    return ((points - grid.origin) / grid.spacing).T


def _interp(grid: WeightingGrid, points: np.ndarray) -> np.ndarray:
    return map_coordinates(grid.values, _to_index(grid, points), order=1, mode="nearest")


def alpha_at(grid: WeightingGrid, r) -> float:
    """Trilinear α at one position, clamped to [0, 1]; raises OutOfBoundsError outside the grid."""
    point = np.asarray(r, dtype=float).reshape(1, 3)
    if not grid.inside(point)[0]:
        raise OutOfBoundsError(f"position {point[0].tolist()} outside the {grid.qubit_id} grid")
    return float(np.clip(_interp(grid, point)[0], 0.0, 1.0))


def alpha_values(grid: WeightingGrid, points) -> np.ndarray:
    """Vectorized α; positions outside the subdomain contribute 0."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(len(pts))
    inside = grid.inside(pts)
    if np.any(inside):
        out[inside] = np.clip(_interp(grid, pts[inside]), 0.0, 1.0)
    return out


def _central_gradient(grid: WeightingGrid, pts: np.ndarray) -> np.ndarray:
    grad = np.empty((len(pts), 3))
    for d in range(3):
        step = np.zeros(3)
        step[d] = grid.spacing[d]
        grad[:, d] = (_interp(grid, pts + step) - _interp(grid, pts - step)) / (2 * grid.spacing[d])
    return grad


def grad_alpha_at(grid: WeightingGrid, r) -> np.ndarray:
    """∇α (1/µm) at one position by central differences of the interpolated field."""
    point = np.asarray(r, dtype=float).reshape(1, 3)
    if not grid.inside(point, margin=1.0)[0]:
        raise OutOfBoundsError(
            f"position {point[0].tolist()} is within one cell of the {grid.qubit_id} grid boundary"
        )
    return _central_gradient(grid, point)[0]


def grad_alpha_values(grid: WeightingGrid, points) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized ∇α (1/µm) plus a status code per point (GRAD_OK / GRAD_OUTSIDE / GRAD_NEAR_WALL)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grad = np.zeros((len(pts), 3))
    status = np.full(len(pts), GRAD_OUTSIDE, dtype=np.int8)
    inside = grid.inside(pts)
    usable = grid.inside(pts, margin=1.0)
    status[inside & ~usable] = GRAD_NEAR_WALL
    status[usable] = GRAD_OK
    if np.any(usable):
        grad[usable] = _central_gradient(grid, pts[usable])
    return grad, status


def gradient_magnitude_field(grid: WeightingGrid) -> np.ndarray:
    """|∇α| (1/µm) at every node."""
    parts = np.gradient(grid.values, *grid.spacing)
    return np.sqrt(sum(p ** 2 for p in parts))


# === Cache ===

def field_cache_key(layout: ChipLayout, qubit_id: str, grid_spec: GridSpec) -> str:
    payload = {
        "version": FIELD_CACHE_VERSION,
        "layout": layout_to_dict(layout),
        "qubit_id": qubit_id,
        "grid_spec": asdict(grid_spec),
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:20]


def save_grid(grid: WeightingGrid, path: Path, key: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path,
        version=FIELD_CACHE_VERSION,
        key=key,
        qubit_id=grid.qubit_id,
        origin=grid.origin,
        spacing=grid.spacing,
        values=grid.values,
        residual=grid.residual,
        iterations=grid.iterations,
        surface_index=grid.surface_index,
        meta=json.dumps(grid.meta),
    )
    return path


def load_grid(path: Path) -> WeightingGrid:
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != FIELD_CACHE_VERSION:
            raise ValueError(f"{path}: cache version {int(data['version'])} is not supported")
        return WeightingGrid(
            qubit_id=str(data["qubit_id"]),
            origin=data["origin"],
            spacing=data["spacing"],
            values=data["values"],
            residual=float(data["residual"]),
            iterations=int(data["iterations"]),
            surface_index=int(data["surface_index"]),
            meta=json.loads(str(data["meta"])),
        )


def cache_path(cache_dir: Path, layout: ChipLayout, qubit_id: str, grid_spec: GridSpec) -> Path:
    key = field_cache_key(layout, qubit_id, grid_spec)
    return Path(cache_dir) / f"alpha_{qubit_id}_{key}.npz"


def load_or_solve(layout: ChipLayout, qubit_id: str, grid_spec: GridSpec, cache_dir: Path | None) -> WeightingGrid:
    """Reuse a cached solve when the layout + grid spec hash matches, otherwise solve and store."""
    if cache_dir is None:
        return solve_weighting(layout, qubit_id, grid_spec)
    path = cache_path(cache_dir, layout, qubit_id, grid_spec)
    if path.exists():
        log_info(f"reusing cached α for {qubit_id}: {path.name}", "weighting_field")
        return load_grid(path)
    grid = solve_weighting(layout, qubit_id, grid_spec)
    save_grid(grid, path, key=path.stem)
    return grid


def solve_all(layout: ChipLayout, grid_spec: GridSpec, cache_dir: Path | None = None) -> Dict[str, WeightingGrid]:
    return {qid: load_or_solve(layout, qid, grid_spec, cache_dir) for qid in layout.qubit_ids}
