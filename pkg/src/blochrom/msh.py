"""ASCII MSH 2.2 reader and writer for periodic unit-cell meshes.

Triangles (element type 2) carry the region as their first (physical) tag.
Boundary lines (type 1) and corner points (type 15) are written for
compatibility with mesh viewers but ignored on input: periodic pairing is
inferred from coordinates.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ParseError
from .solver2d import INCLUSION, MATRIX, Mesh2D, make_mesh

DEFAULT_TAGS = {"matrix": 1, "inclusion": 2}
BOUNDARY_TAGS = {"bottom": 11, "right": 12, "top": 13, "left": 14, "corner": 15}
_NODES_PER_TYPE = {1: 2, 2: 3, 15: 1}


class _Lines:
    def __init__(self, text):
        if isinstance(text, (bytes, bytearray)):
            text = text.decode("utf-8")
        self.lines = text.splitlines()
        self.i = 0

    def next(self, what="line"):
        while self.i < len(self.lines):
            line = self.lines[self.i].strip()
            self.i += 1
            if line:
                return line
        raise ParseError(f"unexpected end of file while reading {what}", self.i)

    @property
    def lineno(self):
        return self.i

    def expect(self, token):
        line = self.next(token)
        if line != token:
            raise ParseError(f"expected {token!r}, found {line!r}", self.lineno)


def _ints(line, lineno, what):
    try:
        return [int(x) for x in line.split()]
    except ValueError:
        raise ParseError(f"malformed {what}: {line!r}", lineno) from None


def parse_msh(text, tags: dict | None = None, a=None, tol=1e-9) -> Mesh2D:
    """Read an ASCII MSH 2.2 mesh of a square cell.

    Parameters
    ----------
    text : str or bytes
    tags : dict, optional
        Maps ``"matrix"`` and ``"inclusion"`` to physical tags.  Names in a
        ``$PhysicalNames`` section take precedence.

    Raises
    ------
    ParseError
        On malformed content, with the offending line number.
    UnpairedBoundaryNode
        If periodic pairing fails.
    """
    tags = dict(DEFAULT_TAGS if tags is None else tags)
    src = _Lines(text)
    node_ids, coords, tris, regions = [], [], [], []
    seen_format = False
    while True:
        try:
            head = src.next("section")
        except ParseError:
            break
        if head == "$MeshFormat":
            line = src.next("format line")
            parts = line.split()
            if len(parts) < 3 or parts[0] not in ("2.2", "2.2.0", "2"):
                raise ParseError(f"unsupported mesh format {line!r}", src.lineno)
            if parts[1] != "0":
                raise ParseError("binary MSH files are not supported", src.lineno)
            src.expect("$EndMeshFormat")
            seen_format = True
        elif head == "$PhysicalNames":
            n = _ints(src.next(), src.lineno, "count")[0]
            for _ in range(n):
                line = src.next("physical name")
                parts = line.split(maxsplit=2)
                if len(parts) != 3:
                    raise ParseError(f"malformed physical name {line!r}", src.lineno)
                name = parts[2].strip().strip('"').lower()
                if name in ("matrix", "inclusion"):
                    tags[name] = int(parts[1])
            src.expect("$EndPhysicalNames")
        elif head == "$Nodes":
            n = _ints(src.next(), src.lineno, "node count")[0]
            for _ in range(n):
                line = src.next("node")
                parts = line.split()
                if len(parts) != 4:
                    raise ParseError(f"malformed node record {line!r}", src.lineno)
                try:
                    node_ids.append(int(parts[0]))
                    coords.append([float(parts[1]), float(parts[2])])
                except ValueError:
                    raise ParseError(f"malformed node record {line!r}", src.lineno) from None
            src.expect("$EndNodes")
        elif head == "$Elements":
            n = _ints(src.next(), src.lineno, "element count")[0]
            for _ in range(n):
                vals = _ints(src.next("element"), src.lineno, "element record")
                if len(vals) < 3:
                    raise ParseError("element record too short", src.lineno)
                etype, ntags = vals[1], vals[2]
                if etype not in _NODES_PER_TYPE:
                    raise ParseError(f"unsupported element type {etype}", src.lineno)
                nodes = vals[3 + ntags :]
                if len(nodes) != _NODES_PER_TYPE[etype]:
                    raise ParseError(f"element type {etype} needs {_NODES_PER_TYPE[etype]} nodes, got {len(nodes)}", src.lineno)
                if etype == 2:
                    phys = vals[3] if ntags else None
                    if phys == tags["matrix"]:
                        regions.append(MATRIX)
                    elif phys == tags["inclusion"]:
                        regions.append(INCLUSION)
                    else:
                        raise ParseError(f"triangle physical tag {phys} is neither matrix nor inclusion", src.lineno)
                    tris.append((nodes, src.lineno))
            src.expect("$EndElements")
        elif head.startswith("$"):
            end = "$End" + head[1:]
            while src.next(end) != end:
                pass
        else:
            raise ParseError(f"unexpected content {head!r}", src.lineno)
    if not seen_format:
        raise ParseError("missing $MeshFormat section", 1)
    if not coords or not tris:
        raise ParseError("mesh needs nodes and triangles", src.lineno)
    index = {nid: i for i, nid in enumerate(node_ids)}
    tri_arr = []
    for nodes, lineno in tris:
        try:
            tri_arr.append([index[v] for v in nodes])
        except KeyError as exc:
            raise ParseError(f"triangle references unknown node {exc.args[0]}", lineno) from None
    return make_mesh(np.array(coords), np.array(tri_arr), np.array(regions), a=a, tol=tol)


def write_msh(mesh: Mesh2D, tags: dict | None = None) -> str:
    """Serialize ``mesh`` as ASCII MSH 2.2 (nodes numbered from 1)."""
    tags = dict(DEFAULT_TAGS if tags is None else tags)
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames", "7"]
    out += [f'2 {tags["matrix"]} "matrix"', f'2 {tags["inclusion"]} "inclusion"']
    out += [f'1 {BOUNDARY_TAGS[s]} "{s}"' for s in ("bottom", "right", "top", "left")]
    out += [f'0 {BOUNDARY_TAGS["corner"]} "corner"', "$EndPhysicalNames"]
    out += ["$Nodes", str(mesh.n_nodes)]
    out += [f"{i + 1} {x!r} {y!r} 0" for i, (x, y) in enumerate(mesh.nodes.tolist())]
    out.append("$EndNodes")

    elems = []
    for c in mesh.corners:
        elems.append(f"15 2 {BOUNDARY_TAGS['corner']} {BOUNDARY_TAGS['corner']} {c + 1}")
    x0, y0 = mesh.origin
    x = mesh.nodes[:, 0] - x0
    y = mesh.nodes[:, 1] - y0
    eps = 1e-9 * mesh.a
    sides = {
        "bottom": (np.abs(y) <= eps, x),
        "right": (np.abs(x - mesh.a) <= eps, y),
        "top": (np.abs(y - mesh.a) <= eps, x),
        "left": (np.abs(x) <= eps, y),
    }
    for name, (mask, t) in sides.items():
        idx = np.flatnonzero(mask)
        idx = idx[np.argsort(t[idx], kind="stable")]
        tag = BOUNDARY_TAGS[name]
        for p, q in zip(idx[:-1], idx[1:]):
            elems.append(f"1 2 {tag} {tag} {p + 1} {q + 1}")
    for tri, reg in zip(mesh.triangles, mesh.region):
        tag = tags["inclusion"] if reg == INCLUSION else tags["matrix"]
        elems.append(f"2 2 {tag} {tag} {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}")
    out += ["$Elements", str(len(elems))]
    out += [f"{i + 1} {e}" for i, e in enumerate(elems)]
    out += ["$EndElements", ""]
    return "\n".join(out)
