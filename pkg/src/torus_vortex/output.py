"""Atomic file output, small CSV writers and dependency-free SVG plots."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

DEGREE_STYLE = {
    1: {"stroke": "#c0392b", "dash": None},
    -1: {"stroke": "#2471a3", "dash": "0.012 0.008"},
}
LINE_WIDTH = 0.004
MARKER_RADIUS = 0.008


def atomic_write(path, data: bytes | str):
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def fmt(v) -> str:
    return format(float(v), ".17g")


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else fmt(v) if isinstance(v, float) else str(v)
                       for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def split_at_seams(points):
    """Split a wrapped path wherever it jumps across the torus seam."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return []
    jumps = np.nonzero(np.any(np.abs(np.diff(points, axis=0)) > 0.5, axis=1))[0] + 1
    return [seg for seg in np.split(points, jumps) if len(seg)]


def _polyline(seg, degree, extra=""):
    style = DEGREE_STYLE.get(int(degree), DEGREE_STYLE[1])
    pts = " ".join(f"{x:.6f},{y:.6f}" for x, y in seg)
    dash = f' stroke-dasharray="{style["dash"]}"' if style["dash"] else ""
    return (
        f'<polyline points="{pts}" fill="none" stroke="{style["stroke"]}" '
        f'stroke-width="{LINE_WIDTH}"{dash}{extra}/>'
    )


def trajectory_svg(paths, degrees, title="", overlays=()) -> str:
    """Wrapped paths on the unit square, y axis up.

    ``paths`` holds one (samples, 2) array of wrapped positions per vortex.
    Paths that never move are drawn as start markers only.  ``overlays``
    are extra (paths, degrees) pairs drawn thinner and semi-transparent.
    """
    body = []
    for over_paths, over_degrees in overlays:
        for p, d in zip(over_paths, over_degrees):
            for seg in split_at_seams(p):
                if len(seg) > 1:
                    body.append(_polyline(seg, d, ' stroke-opacity="0.45"'))
    for p, d in zip(paths, degrees):
        p = np.asarray(p, dtype=float)
        if len(p) > 1 and np.ptp(p, axis=0).max() > 1e-9:
            body += [_polyline(seg, d) for seg in split_at_seams(p) if len(seg) > 1]
        style = DEGREE_STYLE.get(int(d), DEGREE_STYLE[1])
        body.append(
            f'<circle cx="{p[0, 0]:.6f}" cy="{p[0, 1]:.6f}" r="{MARKER_RADIUS}" '
            f'fill="{style["stroke"]}"/>'
        )
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1 1" width="600" height="600">\n'
        f"<title>{escape(title)}</title>\n"
        '<rect x="0" y="0" width="1" height="1" fill="white" stroke="black" stroke-width="0.004"/>\n'
        '<g transform="matrix(1 0 0 -1 0 1)">\n'
    )
    return head + "\n".join(body) + "\n</g>\n</svg>\n"
