"""Antipodally symmetric sphere grids with cone-coordinate point location.

A point ``x`` inside the cone over a grid simplex with vertices ``n_i`` is
written ``x = sum w_i n_i`` with ``w_i >= 0``.  Interpolating nodal values by
``sum w_i v_i`` is positively homogeneous by construction.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

__all__ = ["SphereGrid", "circle_grid", "icosphere_grid", "default_grid"]


class SphereGrid:
    """Nodes on the unit sphere of R^n (n = 2 or 3) plus a simplicial cover.

    Attributes
    ----------
    nodes : (N, n) array, with ``nodes[antipode[i]] == -nodes[i]`` exactly.
    faces : (F, n) int array of node indices.
    classes : (N,) int array mapping each node to its antipodal class.
    reps : (N // 2,) node index representing each class.
    """

    def __init__(self, kind, nodes, faces, descriptor):
        self.kind = kind
        self.descriptor = dict(descriptor)
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        self.n = self.nodes.shape[1]
        N = self.nodes.shape[0]
        tree = cKDTree(self.nodes)
        dist, anti = tree.query(-self.nodes)
        if dist.max() > 1e-9:
            raise ValueError("grid is not antipodally symmetric")
        self.antipode = anti.astype(np.int64)
        classes = np.full(N, -1, dtype=np.int64)
        reps = []
        for i in range(N):
            if classes[i] < 0:
                classes[i] = classes[anti[i]] = len(reps)
                reps.append(i)
        self.classes = classes
        self.reps = np.array(reps, dtype=np.int64)
        self._tree = tree
        cols = self.nodes[self.faces]  # (F, n, n): rows are vertices
        self.face_inverse = np.linalg.inv(np.transpose(cols, (0, 2, 1)))
        # angular circumradius per face: angle between face normal direction and a vertex
        if self.n == 2:
            cosr = np.abs(np.einsum("ij,ij->i", cols[:, 0], cols[:, 1]))
            self.face_radius = np.arccos(np.clip(np.sqrt((1 + cosr) / 2), -1, 1))
        else:
            ones = np.ones(self.n)
            centers = np.einsum("fij,j->fi", np.transpose(self.face_inverse, (0, 2, 1)), ones)
            centers /= np.linalg.norm(centers, axis=1)[:, None]
            cosr = np.einsum("fi,fi->f", centers, cols[:, 0])
            self.face_radius = np.arccos(np.clip(cosr, -1, 1))
        edges = set()
        for f in self.faces:
            for a in range(self.n):
                for b in range(a + 1, self.n):
                    edges.add((min(f[a], f[b]), max(f[a], f[b])))
        e = np.array(sorted(edges))
        ang = np.arccos(np.clip(np.einsum("ij,ij->i", self.nodes[e[:, 0]], self.nodes[e[:, 1]]), -1, 1))
        self.spacing = float(ang.max())
        self.mean_spacing = float(ang.mean())
        incident = [[] for _ in range(N)]
        for k, f in enumerate(self.faces):
            for v in f:
                incident[v].append(k)
        width = max(len(x) for x in incident)
        self._incident = np.full((N, width), -1, dtype=np.int64)
        for v, fs in enumerate(incident):
            self._incident[v, :len(fs)] = fs

    @property
    def size(self):
        return self.nodes.shape[0]

    @property
    def interpolation_error(self):
        """Relative interpolation error for the Euclidean norm, sec(r_max) - 1."""
        return float(1.0 / np.cos(self.face_radius.max()) - 1.0)

    def locate(self, points):
        """Face index and nonnegative cone weights for each row of ``points``."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        if self.n == 2:
            return self._locate_circle(P)
        return self._locate_sphere(P)

    def _locate_circle(self, P):
        N = self.size
        theta = np.arctan2(P[:, 1], P[:, 0])
        k = np.floor(theta / (2 * np.pi / N)).astype(np.int64) % N
        w = np.einsum("fij,fj->fi", self.face_inverse[k], P)
        # guard against round-off at face boundaries
        bad = w.min(axis=1) < -1e-12 * np.abs(w).max(axis=1)
        if np.any(bad):
            for idx in np.nonzero(bad)[0]:
                for kk in ((k[idx] - 1) % N, (k[idx] + 1) % N):
                    ww = self.face_inverse[kk] @ P[idx]
                    if ww.min() >= w[idx].min():
                        k[idx], w[idx] = kk, ww
        return k, np.maximum(w, 0.0)

    def _locate_sphere(self, P):
        norms = np.linalg.norm(P, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        U = P / safe[:, None]
        face = np.empty(len(P), dtype=np.int64)
        weights = np.empty((len(P), 3))
        best = np.full(len(P), -np.inf)
        for k_near in (1, 4):
            todo = np.nonzero(best < -1e-12)[0]
            if todo.size == 0:
                break
            _, near = self._tree.query(U[todo], k=k_near)
            near = near.reshape(len(todo), -1)
            cand = self._incident[near].reshape(len(todo), -1)
            valid = cand >= 0
            cidx = np.where(valid, cand, 0)
            w = np.einsum("pcij,pj->pci", self.face_inverse[cidx], U[todo])
            score = np.where(valid, w.min(axis=2), -np.inf)
            j = score.argmax(axis=1)
            s = score[np.arange(len(todo)), j]
            upd = s > best[todo]
            t = todo[upd]
            face[t] = cidx[upd, j[upd]]
            weights[t] = w[upd, j[upd]]
            best[t] = s[upd]
        todo = np.nonzero(best < -1e-12)[0]
        for idx in todo:
            w = np.einsum("fij,j->fi", self.face_inverse, U[idx])
            k = int(w.min(axis=1).argmax())
            face[idx], weights[idx] = k, w[k]
        weights = np.maximum(weights, 0.0) * norms[:, None]
        return face, weights


def circle_grid(size=2048):
    if size % 2 or size < 8:
        raise ValueError("circle grid size must be even and at least 8")
    k = np.arange(size)
    theta = 2 * np.pi * k / size
    nodes = np.column_stack([np.cos(theta), np.sin(theta)])
    half = size // 2
    nodes[half:] = -nodes[:half]
    faces = np.column_stack([k, (k + 1) % size])
    return SphereGrid("circle", nodes, faces, {"kind": "circle", "size": size})


def _icosahedron():
    p = (1 + 5 ** 0.5) / 2
    v = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return v / np.linalg.norm(v, axis=1)[:, None], f


def icosphere_grid(level=5):
    verts, faces = _icosahedron()
    verts = [tuple(v) for v in verts]
    for _ in range(level):
        cache = {}
        new_faces = []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = np.add(verts[a], verts[b])
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = np.array(new_faces)
    nodes = np.array(verts)
    # make antipodes exact negatives of each other
    tree = cKDTree(nodes)
    _, anti = tree.query(-nodes)
    for i in range(len(nodes)):
        j = anti[i]
        if j > i:
            nodes[j] = -nodes[i]
    return SphereGrid("icosphere", nodes, faces, {"kind": "icosphere", "level": level})


@lru_cache(maxsize=8)
def _cached(kind, param):
    return circle_grid(param) if kind == "circle" else icosphere_grid(param)


def default_grid(n, resolution=None):
    """2048-node circle for n = 2, level-5 icosphere (10242 nodes) for n = 3."""
    if n == 2:
        return _cached("circle", 2048 if resolution is None else int(resolution))
    if n == 3:
        return _cached("icosphere", 5 if resolution is None else int(resolution))
    raise ValueError("sphere grids are available for n = 2 and n = 3")


def grid_from_descriptor(desc):
    if desc.get("kind") == "circle":
        return _cached("circle", int(desc["size"]))
    if desc.get("kind") == "icosphere":
        return _cached("icosphere", int(desc["level"]))
    raise ValueError(f"unknown grid descriptor {desc!r}")
