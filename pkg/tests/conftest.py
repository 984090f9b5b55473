import numpy as np
import pytest

from llg import assemble, generate_structured
from llg.mesh import Mesh


def random_unit_field(rng, n):
    m = rng.standard_normal((n, 3))
    return m / np.linalg.norm(m, axis=1)[:, None]


def _opposite_angle_sum(p, q, r, s):
    """Angles at ``r`` and ``s`` facing the segment ``p``-``q``."""

    def angle(at, u, v):
        a, b = u - at, v - at
        return np.arccos(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))

    return angle(r, p, q) + angle(s, p, q)


def jittered_delaunay_mesh(n, jitter=0.2, seed=0):
    """Irregular periodic triangulation of the unit square.

    Grid nodes are displaced by up to ``jitter * h``; boundary nodes slide
    only along the boundary and corners stay put, so periodic copies remain
    consistent and the bounding box is the unit square. Each cell is split
    along the diagonal whose opposite angles sum to at most pi, which keeps
    every off-diagonal stiffness entry nonpositive.
    """
    rng = np.random.default_rng(seed)
    h = 1.0 / n
    shift = rng.uniform(-jitter, jitter, size=(n, n, 2)) * h
    shift[0, :, 0] = 0.0  # i = 0 column: x fixed
    shift[:, 0, 1] = 0.0  # j = 0 row: y fixed
    vid = lambda i, j: j * (n + 1) + i
    verts = np.empty(((n + 1) ** 2, 2))
    for j in range(n + 1):
        for i in range(n + 1):
            verts[vid(i, j)] = (i * h, j * h) + shift[i % n, j % n]
    cells = []
    for j in range(n):
        for i in range(n):
            sw, se, ne, nw = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            P = verts
            if _opposite_angle_sum(P[sw], P[ne], P[se], P[nw]) <= np.pi:
                cells += [[sw, se, ne], [sw, ne, nw]]
            else:
                cells += [[sw, se, nw], [se, ne, nw]]
    pairs = []
    for t in range(n + 1):
        pairs.append((vid(n, t), vid(0, t)))
        if t < n:
            pairs.append((vid(t, n), vid(t, 0)))
    return Mesh.from_arrays(verts, np.array(cells), pairs)


@pytest.fixture(scope="session")
def mesh2():
    return generate_structured(2)


@pytest.fixture(scope="session")
def ops2(mesh2):
    return assemble(mesh2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
