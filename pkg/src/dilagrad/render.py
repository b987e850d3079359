"""Static SVG pictures of 2D meshes, domains and boundary data."""

import os
import tempfile
from pathlib import Path

import numpy as np

from .cutgeom import boundary_geometries, clip_simplex, face_patch, face_locus_kind
from .errors import UnsupportedRenderError
from .levelset import classify

SIZE = 600
MARGIN = 20


def write_atomic(path, text):
    """Write text to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Frame:
    def __init__(self, mesh):
        lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
        self.lo = lo
        self.scale = (SIZE - 2 * MARGIN) / float(np.max(hi - lo))
        self.height = MARGIN * 2 + (hi[1] - lo[1]) * self.scale
        self.width = MARGIN * 2 + (hi[0] - lo[0]) * self.scale

    def xy(self, p):
        x = MARGIN + (p[0] - self.lo[0]) * self.scale
        y = self.height - MARGIN - (p[1] - self.lo[1]) * self.scale
        return f"{x:.3f},{y:.3f}"

    def poly(self, pts, style):
        return f'<polygon points="{" ".join(self.xy(p) for p in pts)}" {style}/>'

    def line(self, a, b, style):
        (x1, y1), (x2, y2) = self.xy(a).split(","), self.xy(b).split(",")
        return f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" {style}/>'


def render_svg(mesh, levelset=None, hat=None, face_values=None, highlight_aligned=True):
    """SVG text of the mesh with optional domain, boundary and overlays.

    Parameters
    ----------
    levelset : LevelSetFunction, optional
        Shades the domain and draws its boundary.
    hat : HatPerturbation, optional
        Tints the support of the perturbation.
    face_values : dict, optional
        Face index to value; drawn as discs at the face loci, area
        proportional to magnitude, red for negative and green otherwise.
    highlight_aligned : bool
        Draw faces lying in the zero set in red.

    Raises
    ------
    UnsupportedRenderError
        The mesh is three-dimensional.
    """
    if mesh.dim != 2:
        raise UnsupportedRenderError("SVG output is only available in 2D; use the JSON dump")
    fr = _Frame(mesh)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{fr.width:.0f}" '
           f'height="{fr.height:.0f}" viewBox="0 0 {fr.width:.3f} {fr.height:.3f}">',
           '<rect width="100%" height="100%" fill="white"/>']
    if levelset is not None:
        phi = levelset.nodal_values
        s = np.sign(phi)
        for k in range(mesh.n_cells):
            idx = mesh.cells[k]
            if np.all(s[idx] == 0):
                continue
            for sub in clip_simplex(mesh.vertices[idx], phi[idx], s[idx]):
                out.append(fr.poly(sub, 'fill="#bcd4f0" stroke="none"'))
    if hat is not None:
        for k in hat.support_cells():
            out.append(fr.poly(mesh.vertices[mesh.cells[k]],
                               'fill="#f5a623" fill-opacity="0.25" stroke="none"'))
    for f in range(mesh.n_faces):
        a, b = mesh.vertices[mesh.faces[f]]
        out.append(fr.line(a, b, 'stroke="#999999" stroke-width="0.6"'))
    if levelset is not None:
        segs = []
        for g in boundary_geometries(levelset):
            a, b = g.patch_simplices[0]
            segs.append(f"M{fr.xy(a)} L{fr.xy(b)}")
        if segs:
            out.append(f'<path d="{" ".join(segs)}" fill="none" stroke="#1f4e99" '
                       'stroke-width="2"/>')
        if highlight_aligned:
            for f in classify(levelset).aligned_faces:
                a, b = mesh.vertices[mesh.faces[f]]
                out.append(fr.line(a, b, 'stroke="#d0021b" stroke-width="3"'))
    if face_values and levelset is not None:
        vmax = max(abs(v) for v in face_values.values()) or 1.0
        for f in sorted(face_values):
            if face_locus_kind(levelset, f) != "regular":
                continue
            fp = face_patch(levelset, f)
            if fp is None:
                continue
            c = fp.cut_locus.mean(axis=0)
            x, y = fr.xy(c).split(",")
            rad = 8.0 * np.sqrt(abs(face_values[f]) / vmax)
            colour = "#d0021b" if face_values[f] < 0 else "#2e8b57"
            out.append(f'<circle cx="{x}" cy="{y}" r="{rad:.3f}" fill="{colour}" '
                       'fill-opacity="0.7"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save_svg(path, *args, **kwargs):
    write_atomic(path, render_svg(*args, **kwargs))
