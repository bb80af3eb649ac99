"""Procedural block world shared by the LiDAR and camera renderers.

The world is a grid of ground cells; each cell independently draws a
class from the domain's class priors. Class 0 is bare ground; other
classes place one axis-aligned shape (slab / box / tall box / cylinder /
billboard) inside the cell. Because cell classes are i.i.d., the class
of whatever surface a ray hits is prior-distributed regardless of range,
which keeps point-label frequencies close to the priors by construction.
"""

import dataclasses

import numpy as np

# (kind, h_lo, h_hi, frac_x, frac_y); kind 1 = box, 2 = cylinder (frac_x = radius)
# Heights and widths are balanced so every family intercepts a similar
# share of rays; otherwise tall classes hog the labels and starve the rest.
SHAPE_FAMILIES = [
    (1, 0.55, 0.95, 0.78, 0.78),   # low slab
    (2, 1.35, 1.95, 0.48, 0.48),   # cylinder
    (1, 0.95, 1.35, 0.65, 0.65),   # mid box
    (1, 1.45, 2.05, 0.46, 0.46),   # slim tall box
    (1, 1.15, 1.75, 0.11, 0.65),   # thin billboard
]

GRID_X = (-4.0, 24.0)
GRID_Y = (-14.0, 14.0)
CLEAR_RADIUS = 3.0        # cells this close to the sensors stay bare ground
BASE_CELL = 1.6           # meters at layout_scale 1.0

_PALETTE6 = np.array([
    [0.24, 0.24, 0.26],   # ground: gray
    [0.45, 0.33, 0.18],   # slab: tan
    [0.16, 0.42, 0.14],   # cylinder: green
    [0.42, 0.10, 0.10],   # mid box: red
    [0.14, 0.16, 0.44],   # tall box: blue
    [0.46, 0.44, 0.12],   # billboard: yellow
], dtype=np.float32)

SKY_COLOR = np.array([0.06, 0.08, 0.14], dtype=np.float32)


def palette(num_classes):
    """Canonical class colors; fixed for C = 6, hue wheel otherwise."""
    if num_classes <= 6:
        return _PALETTE6[:num_classes].copy()
    cols = [_PALETTE6[i] for i in range(6)]
    for c in range(6, num_classes):
        h = (c * 0.61803398875) % 1.0
        r = 0.5 * abs(np.sin(np.pi * (h + 0.00)))
        g = 0.5 * abs(np.sin(np.pi * (h + 0.33)))
        b = 0.5 * abs(np.sin(np.pi * (h + 0.67)))
        cols.append(np.array([r, g, b], dtype=np.float32))
    return np.stack(cols)


def class_shape(c):
    return SHAPE_FAMILIES[(c - 1) % len(SHAPE_FAMILIES)]


@dataclasses.dataclass
class World:
    cls: np.ndarray       # (Gx, Gy) int32 cell class
    hgt: np.ndarray       # (Gx, Gy) float64 object height
    kind: np.ndarray      # (Gx, Gy) int8: 0 none, 1 box, 2 cylinder
    half_x: np.ndarray    # (Gx, Gy) float64 half extent / radius
    half_y: np.ndarray
    ocx: np.ndarray       # (Gx, Gy) float64 object center, world coords
    ocy: np.ndarray
    x0: float
    y0: float
    cell: float
    max_range: float = 30.0


def build_world(rng, spec):
    cell = BASE_CELL / spec.layout_scale
    gx = int(np.ceil((GRID_X[1] - GRID_X[0]) / cell))
    gy = int(np.ceil((GRID_Y[1] - GRID_Y[0]) / cell))
    x0, y0 = GRID_X[0], GRID_Y[0]

    priors = np.asarray(spec.class_priors, dtype=np.float64)
    cls = rng.choice(spec.num_classes, size=(gx, gy), p=priors).astype(np.int32)
    u_h = rng.random((gx, gy))
    jit = rng.uniform(-1.0, 1.0, size=(gx, gy, 2))

    cx_idx, cy_idx = np.meshgrid(np.arange(gx), np.arange(gy), indexing="ij")
    ccx = x0 + (cx_idx + 0.5) * cell
    ccy = y0 + (cy_idx + 0.5) * cell
    near = np.sqrt(ccx ** 2 + ccy ** 2) < CLEAR_RADIUS
    cls[near] = 0

    hgt = np.zeros((gx, gy))
    kind = np.zeros((gx, gy), dtype=np.int8)
    half_x = np.zeros((gx, gy))
    half_y = np.zeros((gx, gy))
    ocx = ccx.copy()
    ocy = ccy.copy()
    for c in range(1, spec.num_classes):
        k, h_lo, h_hi, fx, fy = class_shape(c)
        m = cls == c
        kind[m] = k
        hgt[m] = h_lo + u_h[m] * (h_hi - h_lo)
        half_x[m] = fx * cell / 2.0
        half_y[m] = fy * cell / 2.0
        ocx[m] += jit[m, 0] * (1.0 - fx) * cell / 4.0
        ocy[m] += jit[m, 1] * (1.0 - fy) * cell / 4.0

    return World(cls=cls, hgt=hgt, kind=kind, half_x=half_x, half_y=half_y,
                 ocx=ocx, ocy=ocy, x0=x0, y0=y0, cell=cell)


def cast_rays(world, dirs, origin):
    """First-hit intersection of unit rays against the block world."""
    from .. import kernels
    return kernels.raycast_grid(
        dirs, np.asarray(origin, dtype=np.float64),
        world.cls, world.hgt, world.kind, world.half_x, world.half_y,
        world.ocx, world.ocy, world.x0, world.y0, world.cell,
        world.max_range)
