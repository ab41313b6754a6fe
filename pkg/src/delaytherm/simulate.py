"""Euler-Maruyama integration of the dimensionless delayed Langevin equation.

    v_{n+1} = v_n + dt (-v_n/Q0 - q_n + (g/Q0) q_{n - n_delay}) + sqrt(2 dt/Q0) N(0, 1)
    q_{n+1} = q_n + dt v_{n+1}

The delayed position is read from a ring buffer of ``n_delay + 1`` slots.  Recorded
velocities are time-centred, ``(v_n + v_{n+1})/2 = (q_{n+1} - q_{n-1})/(2 dt)``, so that
they sit on the same grid as ``q_n``; the integrator's own ``v_n`` lags by half a step.  A run
consists of three phases: feedback-off evolution from an equilibrium draw (fills
the buffer), feedback-on warm-up, and the recorded window.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .errors import DivergenceError, EnsembleError, InvalidParameterError
from .model import ReducedParams

DEFAULT_DT = 2 * math.pi / 200
NOISE_CHUNK = 1 << 18
OVERFLOW_GUARD = 1e6

# accumulator slots of the recorded window
_N, _SQ, _SQQ, _SQ4, _SV, _SVV, _SV4, _SY, _SYY, _SYV = range(10)


def generator_id() -> str:
    return f"numpy.random.PCG64/SeedSequence numpy-{np.__version__}"


@dataclass(frozen=True)
class SimConfig:
    """Integration settings; ``None`` warm-ups take the defaults ``max(tau, 10 Q0)`` and ``20 Q0``."""

    params: ReducedParams
    dt: float = DEFAULT_DT
    n_steps: int = 100_000
    warmup_off: Optional[float] = None
    warmup_on: Optional[float] = None
    seed: int = 0
    record_stride: int = 1
    overflow_guard: float = OVERFLOW_GUARD

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise InvalidParameterError("n_steps must be >= 1")
        if self.record_stride < 1:
            raise InvalidParameterError("record_stride must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")
        if self.warmup_off is not None and self.warmup_off < self.params.tau:
            raise InvalidParameterError(
                f"warmup_off={self.warmup_off} shorter than the delay tau={self.params.tau}")
        if self.warmup_on is not None and self.warmup_on < 0:
            raise InvalidParameterError("warmup_on must be non-negative")

    @property
    def n_delay(self) -> int:
        return int(round(self.params.tau / self.dt))

    @property
    def tau_realized(self) -> float:
        return self.n_delay * self.dt

    @property
    def warmup_off_eff(self) -> float:
        if self.warmup_off is not None:
            return self.warmup_off
        return max(self.params.tau, 10.0 * self.params.q0)

    @property
    def warmup_on_eff(self) -> float:
        return self.warmup_on if self.warmup_on is not None else 20.0 * self.params.q0

    @property
    def n_off(self) -> int:
        return max(int(math.ceil(self.warmup_off_eff / self.dt - 1e-9)), self.n_delay)

    @property
    def n_on(self) -> int:
        return int(math.ceil(self.warmup_on_eff / self.dt - 1e-9))

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "g": self.params.g, "q0": self.params.q0, "tau": self.params.tau, "dt": self.dt,
            "n_steps": self.n_steps, "warmup_off": self.warmup_off_eff,
            "warmup_on": self.warmup_on_eff, "seed": int(self.seed),
            "record_stride": self.record_stride, "overflow_guard": self.overflow_guard,
        }


@dataclass
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    meta: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EnsembleStats:
    mean_sigma_q2: float
    mean_sigma_v2: float
    mean_corr: float
    se_sigma_q2: float
    se_sigma_v2: float
    se_corr: float
    n_traj: int
    per_trajectory: tuple = ()


@numba.njit(cache=True, nogil=True)
def _advance(state, buf, noise, dt, inv_q, gain, amp, guard, rec_q, rec_v, rec_offset, stride,
             acc, accumulate):
    """Advance ``len(noise)`` steps.  Returns -1 or the local index of a guard violation.

    ``state`` holds ``[q, v, write_index, recorded_step_counter]``.
    """
    q = state[0]
    v = state[1]
    w = int(state[2])
    n_rec = int(state[3])
    size = buf.shape[0]
    for i in range(noise.shape[0]):
        buf[w] = q
        w += 1
        if w == size:
            w = 0
        y = buf[w]
        v_new = v + dt * (-v * inv_q - q + gain * y) + amp * noise[i]
        if accumulate:
            # time-centred velocity, aligned with q_n on the grid
            vc = 0.5 * (v + v_new)
            if n_rec % stride == 0:
                k = n_rec // stride - rec_offset
                if 0 <= k < rec_q.shape[0]:
                    rec_q[k] = q
                    rec_v[k] = vc
            acc[0] += 1.0
            acc[1] += q
            acc[2] += q * q
            acc[3] += q * q * q * q
            acc[4] += vc
            acc[5] += vc * vc
            acc[6] += vc * vc * vc * vc
            acc[7] += y
            acc[8] += y * y
            acc[9] += y * vc
            n_rec += 1
        v = v_new
        q = q + dt * v
        if not abs(q) < guard:
            state[0] = q
            state[1] = v
            state[2] = w
            state[3] = n_rec
            return i
    state[0] = q
    state[1] = v
    state[2] = w
    state[3] = n_rec
    return -1


def _stats_from_acc(acc: np.ndarray) -> dict:
    n = acc[_N]
    mq, mv, my = acc[_SQ] / n, acc[_SV] / n, acc[_SY] / n
    var_q = acc[_SQQ] / n - mq * mq
    var_v = acc[_SVV] / n - mv * mv
    var_y = acc[_SYY] / n - my * my
    cov_yv = acc[_SYV] / n - my * mv
    return {
        "n": int(n),
        "mean_q": mq,
        "mean_v": mv,
        "sigma_q2": var_q,
        "sigma_v2": var_v,
        "corr": cov_yv / math.sqrt(var_y * var_v) if var_y > 0 and var_v > 0 else float("nan"),
        # raw fourth moments about zero; the process is centred
        "m4_q": acc[_SQ4] / n,
        "m4_v": acc[_SV4] / n,
    }


class _Runner:
    """Holds the integrator state for one trajectory and feeds it noise chunk by chunk."""

    def __init__(self, params: ReducedParams, dt: float, n_delay: int, guard: float, q0v0):
        self.dt = dt
        self.inv_q = 1.0 / params.q0
        self.gain = params.g / params.q0
        self.amp = math.sqrt(2.0 * dt / params.q0)
        self.guard = guard
        self.buf = np.full(n_delay + 1, q0v0[0])
        self.state = np.array([q0v0[0], q0v0[1], 0.0, 0.0])
        self.acc = np.zeros(10)
        self.steps_done = 0

    def run(self, noise, feedback, record=None, stride=1, accumulate=False):
        if record is None:
            rec_q = rec_v = np.empty(0)
            offset = 0
        else:
            rec_q, rec_v, offset = record
        bad = _advance(self.state, self.buf, noise, self.dt, self.inv_q,
                       self.gain if feedback else 0.0, self.amp, self.guard,
                       rec_q, rec_v, offset, stride, self.acc, accumulate)
        if bad >= 0:
            step = self.steps_done + bad
            raise DivergenceError(f"|q| exceeded {self.guard:g} at step {step}", step=step)
        self.steps_done += noise.shape[0]


def _seed_sequence(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed))


def derive_seed(seed: int, index: int) -> int:
    """64-bit seed of trajectory ``index`` in an ensemble rooted at ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _phases(c: SimConfig):
    return ((c.n_off, False, False), (c.n_on, True, False), (c.n_steps, True, True))


def integrate(c: SimConfig, keep_trace: bool = True) -> Trajectory:
    """Integrate one trajectory.

    The recorded window starts after ``warmup_off + warmup_on``; samples are kept
    every ``record_stride`` steps, while summary statistics (``Trajectory.stats``)
    use every step of the window.
    """
    rng = np.random.Generator(np.random.PCG64(_seed_sequence(c.seed)))
    start = rng.standard_normal(2)
    runner = _Runner(c.params, c.dt, c.n_delay, c.overflow_guard, start)
    n_rec = (c.n_steps + c.record_stride - 1) // c.record_stride if keep_trace else 0
    rec_q, rec_v = np.empty(n_rec), np.empty(n_rec)
    for n_phase, feedback, record in _phases(c):
        remaining = n_phase
        while remaining > 0:
            m = min(NOISE_CHUNK, remaining)
            noise = rng.standard_normal(m)
            runner.run(noise, feedback, (rec_q, rec_v, 0) if record else None,
                       c.record_stride, accumulate=record)
            remaining -= m
    t0 = (c.n_off + c.n_on) * c.dt
    t = t0 + c.dt * c.record_stride * np.arange(n_rec)
    meta = c.as_dict()
    meta.update({"tau_realized": c.tau_realized, "n_delay": c.n_delay,
                 "generator": generator_id(), "t_start": t0})
    return Trajectory(t=t, q=rec_q, v=rec_v, meta=meta, stats=_stats_from_acc(runner.acc))


def _summarize(per: Sequence[dict], n_traj: int) -> EnsembleStats:
    arr = {k: np.array([p[k] for p in per]) for k in ("sigma_q2", "sigma_v2", "corr")}
    root = math.sqrt(n_traj)

    def se(x):
        return float(np.std(x, ddof=1) / root)

    return EnsembleStats(
        mean_sigma_q2=float(arr["sigma_q2"].mean()),
        mean_sigma_v2=float(arr["sigma_v2"].mean()),
        mean_corr=float(arr["corr"].mean()),
        se_sigma_q2=se(arr["sigma_q2"]),
        se_sigma_v2=se(arr["sigma_v2"]),
        se_corr=se(arr["corr"]),
        n_traj=n_traj,
        per_trajectory=tuple(per),
    )


def ensemble(c: SimConfig, n_traj: int, workers: int = 1,
             seeds: Optional[Sequence[int]] = None) -> EnsembleStats:
    """Mean and standard error of per-trajectory moments over ``n_traj`` runs.

    Trajectory ``i`` is seeded with :func:`derive_seed` ``(c.seed, i)`` unless explicit
    ``seeds`` are given.  Results do not depend on ``workers``.
    """
    if n_traj < 2:
        raise InvalidParameterError("an ensemble needs at least two trajectories")
    if seeds is None:
        seeds = [derive_seed(c.seed, i) for i in range(n_traj)]
    elif len(seeds) != n_traj:
        raise InvalidParameterError("len(seeds) must equal n_traj")

    def one(seed):
        try:
            tr = integrate(c.replace(seed=int(seed)), keep_trace=False)
        except DivergenceError as exc:
            return exc
        return tr.stats

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    failed = [i for i, res in enumerate(results) if isinstance(res, Exception)]
    if failed:
        raise EnsembleError(f"trajectories {failed} diverged", failed=failed)
    return _summarize(results, n_traj)


def convergence_probe(c: SimConfig, n_traj: int = 8, workers: int = 1) -> dict:
    """Velocity variance at ``dt``, ``dt/2`` and ``dt/4`` over the same physical duration.

    The three levels share their Brownian paths (fine increments are summed into
    coarse ones), so differences between levels reflect the discretization.  The
    step is declared converged when both successive differences are smaller than
    the ensemble standard error at the finest level.
    """
    levels = (1, 2, 4)
    n_delay = [int(round(c.params.tau * m / c.dt)) for m in levels]
    seeds = [derive_seed(c.seed, i) for i in range(n_traj)]

    def one(seed):
        rng = np.random.Generator(np.random.PCG64(_seed_sequence(seed)))
        start = rng.standard_normal(2)
        runners = [_Runner(c.params, c.dt / m, nd, c.overflow_guard, start)
                   for m, nd in zip(levels, n_delay)]
        for n_phase, feedback, record in _phases(c):
            remaining = n_phase
            while remaining > 0:
                m = min(NOISE_CHUNK // 4, remaining)
                fine = rng.standard_normal(4 * m)
                pairs = fine.reshape(-1, 2).sum(axis=1) / math.sqrt(2.0)
                quads = fine.reshape(-1, 4).sum(axis=1) / 2.0
                for runner, noise in zip(runners, (quads, pairs, fine)):
                    runner.run(noise, feedback, None, 1, accumulate=record)
                remaining -= m
        return [_stats_from_acc(rn.acc)["sigma_v2"] for rn in runners]

    results = []
    diverged = False
    for seed in seeds:
        try:
            results.append(one(seed))
        except DivergenceError:
            diverged = True
            break
    report = {"dt": [c.dt / m for m in levels], "n_traj": n_traj, "diverged": diverged}
    if diverged:
        report.update({"sigma_v2": [float("nan")] * 3, "se": [float("nan")] * 3,
                       "diffs": [float("nan")] * 2, "converged": False})
        return report
    arr = np.array(results)
    est = arr.mean(axis=0)
    se = arr.std(axis=0, ddof=1) / math.sqrt(n_traj)
    diffs = [float(est[1] - est[0]), float(est[2] - est[1])]
    report.update({
        "sigma_v2": est.tolist(),
        "se": se.tolist(),
        "diffs": diffs,
        "tau_realized": [nd * c.dt / m for nd, m in zip(n_delay, levels)],
        "converged": bool(all(abs(d) < se[2] for d in diffs)),
    })
    return report
