"""Pure-Python kernels; the reference the compiled twin must agree with.

Polygons are sequences of ``(x, y)`` vertex pairs, implicitly closed.
"""

from __future__ import annotations


def _orient(ax, ay, bx, by, cx, cy) -> int:
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (v > 0) - (v < 0)


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    """``p`` lies on the closed segment ``ab`` (assumes collinearity checked)."""
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def segments_intersect(ax, ay, bx, by, cx, cy, dx, dy) -> bool:
    """Closed segments ``ab`` and ``cd`` share at least one point."""
    o1 = _orient(ax, ay, bx, by, cx, cy)
    o2 = _orient(ax, ay, bx, by, dx, dy)
    o3 = _orient(cx, cy, dx, dy, ax, ay)
    o4 = _orient(cx, cy, dx, dy, bx, by)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(ax, ay, bx, by, cx, cy):
        return True
    if o2 == 0 and _on_segment(ax, ay, bx, by, dx, dy):
        return True
    if o3 == 0 and _on_segment(cx, cy, dx, dy, ax, ay):
        return True
    if o4 == 0 and _on_segment(cx, cy, dx, dy, bx, by):
        return True
    return False


def point_in_polygon(poly, px, py) -> bool:
    """Boundary-inclusive membership by even-odd ray casting."""
    n = len(poly)
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = poly[i]
        xj, yj = poly[j]
        if _orient(xj, yj, xi, yi, px, py) == 0 and _on_segment(xj, yj, xi, yi, px, py):
            return True
        if (yi > py) != (yj > py):
            xcross = (xj - xi) * (py - yi) / (yj - yi) + xi
            if px < xcross:
                inside = not inside
        j = i
    return inside


def polygons_intersect(a, b) -> bool:
    """Areas overlap, boundaries touch, or one contains the other."""
    na, nb = len(a), len(b)
    for i in range(na):
        ax, ay = a[i]
        bx, by = a[(i + 1) % na]
        for j in range(nb):
            cx, cy = b[j]
            dx, dy = b[(j + 1) % nb]
            if segments_intersect(ax, ay, bx, by, cx, cy, dx, dy):
                return True
    return point_in_polygon(b, *a[0]) or point_in_polygon(a, *b[0])


def is_simple(poly) -> bool:
    """At least 3 vertices, non-zero area, and no edge crossings or overlaps."""
    n = len(poly)
    if n < 3:
        return False
    area2 = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if x0 == x1 and y0 == y1:
            return False
        area2 += x0 * y1 - x1 * y0
    if area2 == 0:
        return False
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        for j in range(i + 1, n):
            cx, cy = poly[j]
            dx, dy = poly[(j + 1) % n]
            if j == i + 1 or (i == 0 and j == n - 1):
                # adjacent edges share one vertex; they must not fold back
                if j == i + 1:
                    px, py, qx, qy, rx, ry = ax, ay, bx, by, dx, dy
                else:
                    px, py, qx, qy, rx, ry = cx, cy, ax, ay, bx, by
                if _orient(px, py, qx, qy, rx, ry) == 0:
                    if (qx - px) * (rx - qx) + (qy - py) * (ry - qy) < 0:
                        return False
                continue
            if segments_intersect(ax, ay, bx, by, cx, cy, dx, dy):
                return False
    return True


def pixelate(data: bytes, width: int, height: int, block: int = 16) -> bytes:
    """Replace every ``block``x``block`` tile of an 8-bit image by its mean."""
    if len(data) != width * height:
        raise ValueError("image size does not match dimensions")
    out = bytearray(len(data))
    for by in range(0, height, block):
        ye = min(by + block, height)
        for bx in range(0, width, block):
            xe = min(bx + block, width)
            total = 0
            for y in range(by, ye):
                row = y * width
                total += sum(data[row + bx : row + xe])
            mean = total // ((ye - by) * (xe - bx))
            fill = bytes([mean]) * (xe - bx)
            for y in range(by, ye):
                row = y * width
                out[row + bx : row + xe] = fill
    return bytes(out)
