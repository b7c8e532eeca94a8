# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_pykernels``; same signatures, same results."""

from libc.stdlib cimport malloc, free


cdef inline int _orient(double ax, double ay, double bx, double by,
                        double cx, double cy) nogil:
    cdef double v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (v > 0) - (v < 0)


cdef inline bint _on_segment(double ax, double ay, double bx, double by,
                             double px, double py) nogil:
    return (min(ax, bx) <= px <= max(ax, bx)) and (min(ay, by) <= py <= max(ay, by))


cdef bint _seg(double ax, double ay, double bx, double by,
               double cx, double cy, double dx, double dy) nogil:
    cdef int o1 = _orient(ax, ay, bx, by, cx, cy)
    cdef int o2 = _orient(ax, ay, bx, by, dx, dy)
    cdef int o3 = _orient(cx, cy, dx, dy, ax, ay)
    cdef int o4 = _orient(cx, cy, dx, dy, bx, by)
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


cdef double* _load(poly, Py_ssize_t* n) except NULL:
    cdef Py_ssize_t i, m = len(poly)
    cdef double* buf = <double*> malloc(2 * (m if m > 0 else 1) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    for i in range(m):
        x, y = poly[i]
        buf[2 * i] = x
        buf[2 * i + 1] = y
    n[0] = m
    return buf


cdef bint _pip(double* p, Py_ssize_t n, double px, double py) nogil:
    cdef bint inside = False
    cdef Py_ssize_t i, j = n - 1
    cdef double xi, yi, xj, yj, xcross
    for i in range(n):
        xi = p[2 * i]; yi = p[2 * i + 1]
        xj = p[2 * j]; yj = p[2 * j + 1]
        if _orient(xj, yj, xi, yi, px, py) == 0 and _on_segment(xj, yj, xi, yi, px, py):
            return True
        if (yi > py) != (yj > py):
            xcross = (xj - xi) * (py - yi) / (yj - yi) + xi
            if px < xcross:
                inside = not inside
        j = i
    return inside


def segments_intersect(double ax, double ay, double bx, double by,
                       double cx, double cy, double dx, double dy):
    return bool(_seg(ax, ay, bx, by, cx, cy, dx, dy))


def point_in_polygon(poly, double px, double py):
    cdef Py_ssize_t n
    cdef double* p = _load(poly, &n)
    try:
        return bool(_pip(p, n, px, py))
    finally:
        free(p)


def polygons_intersect(a, b):
    cdef Py_ssize_t na, nb, i, j, i1, j1
    cdef double* pa = _load(a, &na)
    cdef double* pb
    try:
        pb = _load(b, &nb)
    except BaseException:
        free(pa)
        raise
    cdef bint hit = False
    try:
        for i in range(na):
            i1 = (i + 1) % na
            for j in range(nb):
                j1 = (j + 1) % nb
                if _seg(pa[2 * i], pa[2 * i + 1], pa[2 * i1], pa[2 * i1 + 1],
                        pb[2 * j], pb[2 * j + 1], pb[2 * j1], pb[2 * j1 + 1]):
                    hit = True
                    break
            if hit:
                break
        if not hit:
            hit = _pip(pb, nb, pa[0], pa[1]) or _pip(pa, na, pb[0], pb[1])
        return bool(hit)
    finally:
        free(pa)
        free(pb)


def is_simple(poly):
    cdef Py_ssize_t n, i, j, i1, j1
    if len(poly) < 3:
        return False
    cdef double* p = _load(poly, &n)
    cdef double area2 = 0.0
    cdef double px, py, qx, qy, rx, ry
    try:
        for i in range(n):
            i1 = (i + 1) % n
            if p[2 * i] == p[2 * i1] and p[2 * i + 1] == p[2 * i1 + 1]:
                return False
            area2 += p[2 * i] * p[2 * i1 + 1] - p[2 * i1] * p[2 * i + 1]
        if area2 == 0:
            return False
        for i in range(n):
            i1 = (i + 1) % n
            for j in range(i + 1, n):
                j1 = (j + 1) % n
                if j == i + 1 or (i == 0 and j == n - 1):
                    if j == i + 1:
                        px = p[2 * i]; py = p[2 * i + 1]
                        qx = p[2 * i1]; qy = p[2 * i1 + 1]
                        rx = p[2 * j1]; ry = p[2 * j1 + 1]
                    else:
                        px = p[2 * j]; py = p[2 * j + 1]
                        qx = p[2 * i]; qy = p[2 * i + 1]
                        rx = p[2 * i1]; ry = p[2 * i1 + 1]
                    if _orient(px, py, qx, qy, rx, ry) == 0:
                        if (qx - px) * (rx - qx) + (qy - py) * (ry - qy) < 0:
                            return False
                    continue
                if _seg(p[2 * i], p[2 * i + 1], p[2 * i1], p[2 * i1 + 1],
                        p[2 * j], p[2 * j + 1], p[2 * j1], p[2 * j1 + 1]):
                    return False
        return True
    finally:
        free(p)


def pixelate(const unsigned char[:] data, Py_ssize_t width, Py_ssize_t height,
             Py_ssize_t block=16):
    if data.shape[0] != width * height:
        raise ValueError("image size does not match dimensions")
    out = bytearray(width * height)
    cdef unsigned char[:] o = out
    cdef Py_ssize_t bx, by, xe, ye, x, y
    cdef unsigned long total
    cdef unsigned char mean
    with nogil:
        by = 0
        while by < height:
            ye = min(by + block, height)
            bx = 0
            while bx < width:
                xe = min(bx + block, width)
                total = 0
                for y in range(by, ye):
                    for x in range(bx, xe):
                        total += data[y * width + x]
                mean = <unsigned char>(total // ((ye - by) * (xe - bx)))
                for y in range(by, ye):
                    for x in range(bx, xe):
                        o[y * width + x] = mean
                bx += block
            by += block
    return bytes(out)
