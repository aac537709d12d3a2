"""Grid sweeps over (D, d, polarization) with an optional process pool."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor

from .cache import default_cache_dir
from .config import SweepConfig
from .pipeline import SweepRecord, run_point_safe

log = logging.getLogger(__name__)


class SweepFailedError(RuntimeError):
    """Every grid point failed; the structured records are attached."""

    def __init__(self, records):
        self.records = records
        lines = [f"D={r.D} d={r.d} {r.polarization}: {r.error}" for r in records]
        super().__init__("all %d grid points failed:\n  %s" % (len(records), "\n  ".join(lines)))


def _tasks(cfg: SweepConfig):
    root = cfg.cache_dir or str(default_cache_dir())
    return [(g, p, cfg.transition, cfg.pipeline, root, cfg.cache_enabled) for g, p in cfg.grid]


def run_sweep(cfg: SweepConfig, jobs: int = 1, raise_if_all_failed: bool = True):
    """Solve every grid point.  Returns (records sorted by (D, d, pol), eigensolve count).

    Failures stay in the list as records with ``status == "failed"``.
    """
    tasks = _tasks(cfg)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_point_safe, tasks))
    else:
        results = []
        for i, t in enumerate(tasks):
            r = run_point_safe(t)
            log.info("[%d/%d] D=%g d=%g %s: %s", i + 1, len(tasks), r[0].D, r[0].d, r[0].polarization, r[0].status)
            results.append(r)
    records: list[SweepRecord] = sorted((r for r, _ in results), key=lambda r: r.sort_key)
    n_solves = sum(n for _, n in results)
    assert len(records) == len(tasks)
    if raise_if_all_failed and records and not any(r.ok for r in records):
        raise SweepFailedError(records)
    return records, n_solves
