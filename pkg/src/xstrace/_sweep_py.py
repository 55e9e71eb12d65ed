"""Pure-Python sweep kernel.

Fallback for the compiled extension in ``_sweep.pyx``; both implement the
same single-pid boundary walk and must return identical results. See
``overlap.py`` for the input encoding.
"""

from __future__ import annotations

from bisect import insort

GPU_CAT = 5
GPU_BIT = 1 << (GPU_CAT - 1)


def path_of(active_ranks, rank_name_ids, path_table) -> int:
    """Path id for the active operation stack, outermost first.

    Adjacent levels with the same name collapse to one level.
    """
    names = []
    for rank in active_ranks:
        nid = rank_name_ids[rank]
        if not names or names[-1] != nid:
            names.append(nid)
    return path_table.get_id(tuple(names))


def sweep_pid(starts, ends, cats, ranks, fixed_paths, add_order, rem_order,
              rank_name_ids, path_table):
    """Walk one pid's event boundaries; returns (cells, tracked_ns).

    cells maps ``(path_id << 6) | category_mask`` to accumulated ns.
    ``tracked_ns`` is the total length of elementary intervals with at least
    one active resource event (the remainder of the span is untracked).
    Zero-duration events must already be excluded from the orders.
    """
    n = len(add_order)
    cells: dict[int, int] = {}
    tracked = 0
    cat_count = [0, 0, 0, 0, 0, 0]
    fixed_counts: dict[int, int] = {}
    active_ranks: list[int] = []
    cur_path = path_table.get_id(())
    ops_changed = False
    prev_t = None
    ia = 0
    ir = 0

    while ir < n:
        t = ends[rem_order[ir]]
        if ia < n:
            ta = starts[add_order[ia]]
            if ta < t:
                t = ta

        if prev_t is not None and t > prev_t:
            length = t - prev_t
            if ops_changed:
                cur_path = path_of(active_ranks, rank_name_ids, path_table)
                ops_changed = False
            mask = 0
            for c in (1, 2, 3, 4, 5):
                if cat_count[c] > 0:
                    mask |= 1 << (c - 1)
            if fixed_counts:
                # GPU events pinned to their launch-site path: same-path GPU
                # joins the instantaneous set, foreign paths get GPU-only cells.
                m = mask | GPU_BIT if cur_path in fixed_counts else mask
                if m:
                    key = (cur_path << 6) | m
                    cells[key] = cells.get(key, 0) + length
                for fp in fixed_counts:
                    if fp != cur_path:
                        key = (fp << 6) | GPU_BIT
                        cells[key] = cells.get(key, 0) + length
                tracked += length
            elif mask:
                key = (cur_path << 6) | mask
                cells[key] = cells.get(key, 0) + length
                tracked += length

        while ir < n and ends[rem_order[ir]] == t:
            i = rem_order[ir]
            ir += 1
            c = cats[i]
            if c == 0:
                active_ranks.remove(ranks[i])
                ops_changed = True
            elif fixed_paths[i] >= 0:
                fp = fixed_paths[i]
                left = fixed_counts[fp] - 1
                if left:
                    fixed_counts[fp] = left
                else:
                    del fixed_counts[fp]
            else:
                cat_count[c] -= 1

        while ia < n and starts[add_order[ia]] == t:
            i = add_order[ia]
            ia += 1
            c = cats[i]
            if c == 0:
                insort(active_ranks, ranks[i])
                ops_changed = True
            elif fixed_paths[i] >= 0:
                fp = fixed_paths[i]
                fixed_counts[fp] = fixed_counts.get(fp, 0) + 1
            else:
                cat_count[c] += 1

        prev_t = t

    return cells, tracked
