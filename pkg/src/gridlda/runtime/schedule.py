"""Conflict-free block scheduling: fixed diagonals and the free-data-server
variant that keeps fast workers busy on least-visited blocks."""

__all__ = ["schedule_diagonals", "FreeServerScheduler"]


def schedule_diagonals(num_shards):
    """M segments; segment d pairs data row r with model column (r+d) mod M.

    No segment repeats a row or a column, and over all segments every
    (row, column) block appears exactly once.
    """
    if num_shards < 1:
        raise ValueError("need at least one shard")
    return [
        [(r, (r + dig) % num_shards) for r in range(num_shards)]
        for dig in range(num_shards)
    ]


class FreeServerScheduler:
    """Min-visit block grants over M+1 data rows and M model columns.

    A sampling server that finishes its block asks for another; the grant
    must come from a data row no sampler is currently using, and among free
    rows the block with the fewest visits wins (lowest row on ties). Grants
    never outrun the per-column minimum, so visit counts stay within one of
    each other at every barrier.
    """

    def __init__(self, num_shards, num_rows=None):
        self.num_cols = num_shards
        self.num_rows = num_shards + 1 if num_rows is None else num_rows
        self.visits = [[0] * self.num_cols for _ in range(self.num_rows)]
        self.busy_rows = {}  # row -> sampler column using it

    def acquire(self, sampler, target=None):
        """Next block (row, sampler) for a finished sampler, or None to idle.

        ``target`` caps progress: only blocks still at the column minimum
        (and below ``target`` when given) are granted.
        """
        if sampler in self.busy_rows.values():
            raise ValueError(f"sampler {sampler} still holds a row")
        col_min = min(self.visits[r][sampler] for r in range(self.num_rows))
        if target is not None and col_min >= target:
            return None
        # Only blocks still at the column minimum are eligible; granting
        # ahead of a busy laggard row is what would break the +-1 balance.
        for r in range(self.num_rows):
            if r not in self.busy_rows and self.visits[r][sampler] == col_min:
                self.busy_rows[r] = sampler
                return r
        return None

    def release(self, row, sampler):
        if self.busy_rows.get(row) != sampler:
            raise ValueError(f"row {row} is not held by sampler {sampler}")
        del self.busy_rows[row]
        self.visits[row][sampler] += 1

    def column_done(self, sampler, target):
        return min(self.visits[r][sampler] for r in range(self.num_rows)) >= target

    def spread(self):
        flat = [v for row in self.visits for v in row]
        return max(flat) - min(flat)
