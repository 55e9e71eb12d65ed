# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sweep kernel; must match _sweep_py.sweep_pid result-for-result.

The boundary walk and active-set counters run as typed C loops; cell
accumulation stays in a Python dict keyed by (path_id << 6) | mask, which
is cheap because keys only change at event boundaries.
"""

from cpython cimport array
import array

from ._sweep_py import path_of

DEF GPU_BIT = 16  # 1 << (GPU - 1)


def sweep_pid(starts, ends, cats, ranks, fixed_paths, add_order, rem_order,
              rank_name_ids, path_table):
    cdef Py_ssize_t n = len(add_order)
    cdef Py_ssize_t total = len(starts)

    cdef array.array starts_a = array.array('q', starts)
    cdef array.array ends_a = array.array('q', ends)
    cdef array.array cats_a = array.array('q', cats)
    cdef array.array ranks_a = array.array('q', ranks)
    cdef array.array fixed_a = array.array('q', fixed_paths)
    cdef array.array add_a = array.array('q', add_order) if n else array.array('q')
    cdef array.array rem_a = array.array('q', rem_order) if n else array.array('q')

    cdef long long* s = starts_a.data.as_longlongs
    cdef long long* e = ends_a.data.as_longlongs
    cdef long long* c = cats_a.data.as_longlongs
    cdef long long* r = ranks_a.data.as_longlongs
    cdef long long* f = fixed_a.data.as_longlongs
    cdef long long* ao = add_a.data.as_longlongs if n else NULL
    cdef long long* ro = rem_a.data.as_longlongs if n else NULL

    cells = {}
    cdef long long tracked = 0
    cdef long long cat_count[6]
    cdef int k
    for k in range(6):
        cat_count[k] = 0
    fixed_counts = {}
    active_ranks = []

    cdef long long cur_path = path_table.get_id(())
    cdef bint ops_changed = False
    cdef bint have_prev = False
    cdef long long prev_t = 0, t = 0, ta = 0, length = 0
    cdef Py_ssize_t ia = 0, ir = 0, i = 0
    cdef long long mask = 0, m = 0, key = 0, cat = 0, fp = 0

    while ir < n:
        t = e[ro[ir]]
        if ia < n:
            ta = s[ao[ia]]
            if ta < t:
                t = ta

        if have_prev and t > prev_t:
            length = t - prev_t
            if ops_changed:
                cur_path = path_of(active_ranks, rank_name_ids, path_table)
                ops_changed = False
            mask = 0
            for k in range(1, 6):
                if cat_count[k] > 0:
                    mask |= 1 << (k - 1)
            if fixed_counts:
                m = mask | GPU_BIT if cur_path in fixed_counts else mask
                if m:
                    key = (cur_path << 6) | m
                    cells[key] = cells.get(key, 0) + length
                for fpath in fixed_counts:
                    if fpath != cur_path:
                        key = ((<long long> fpath) << 6) | GPU_BIT
                        cells[key] = cells.get(key, 0) + length
                tracked += length
            elif mask:
                key = (cur_path << 6) | mask
                cells[key] = cells.get(key, 0) + length
                tracked += length

        while ir < n and e[ro[ir]] == t:
            i = ro[ir]
            ir += 1
            cat = c[i]
            if cat == 0:
                active_ranks.remove(r[i])
                ops_changed = True
            elif f[i] >= 0:
                fp = f[i]
                left = fixed_counts[fp] - 1
                if left:
                    fixed_counts[fp] = left
                else:
                    del fixed_counts[fp]
            else:
                cat_count[cat] -= 1

        while ia < n and s[ao[ia]] == t:
            i = ao[ia]
            ia += 1
            cat = c[i]
            if cat == 0:
                _insort(active_ranks, r[i])
                ops_changed = True
            elif f[i] >= 0:
                fp = f[i]
                fixed_counts[fp] = fixed_counts.get(fp, 0) + 1
            else:
                cat_count[cat] += 1

        prev_t = t
        have_prev = True

    return cells, tracked


cdef void _insort(list active, long long value):
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t hi = len(active)
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) // 2
        if <long long> active[mid] < value:
            lo = mid + 1
        else:
            hi = mid
    active.insert(lo, value)
