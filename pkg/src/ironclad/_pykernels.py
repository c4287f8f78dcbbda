"""Pure-Python hot kernels, the reference the compiled ones must match."""

from __future__ import annotations

import numpy as np

from .rng import MASK64, _TWO_M53, _rotl

# counts layout shared with the compiled kernel
C_SIGMA1, C_SIGMA2, C_SIGMA3, C_SIGMA4 = 0, 1, 2, 3
C_W_S0_S2, C_W_S0_S4, C_W_S1_S4, C_PREAMBLE = 4, 5, 6, 7
# scan-state layout
S_MODE, S_RUN, S_ABSORBED, S_MARKOV, S_FROM2 = 0, 1, 2, 3, 4


def _load(state):
    return int(state[0]), int(state[1]), int(state[2]), int(state[3])


def _store(state, s0, s1, s2, s3):
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3


def fill_symbols(state: np.ndarray, out: np.ndarray, p_regular: float, p_block: float) -> None:
    """Fill ``out`` with 0/1/2 symbols: 1 w.p. p_regular, 2 w.p. p_block - p_regular."""
    s0, s1, s2, s3 = _load(state)
    for i in range(out.shape[0]):
        r = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        u = (r >> 11) * _TWO_M53
        out[i] = 1 if u < p_regular else (2 if u < p_block else 0)
    _store(state, s0, s1, s2, s3)


def alpha_scan(symbols: np.ndarray, delta: int, scan: np.ndarray, counts: np.ndarray) -> None:
    """Streaming pattern decomposition plus the S0/S1/S2 tracking machine.

    Only completed patterns are counted, so a pattern cut off by the end of
    the data is never counted; feeding more data later completes it.
    """
    mode, run, absorbed, mstate, from2 = (int(v) for v in scan[:5])
    c = [int(v) for v in counts]

    def complete(kind):
        nonlocal mstate, from2
        c[kind - 1] += 1
        if mstate == 2:
            if kind == 4:
                mstate = 0
                from2 = 1
            # sigma3 keeps S2; regular-led patterns are no-ops here
            return
        if kind == 2:
            if mstate == 0 and not from2:
                c[C_W_S0_S2] += 1
            mstate = 0
        elif kind == 4:
            c[C_W_S0_S4 if mstate == 0 else C_W_S1_S4] += 1
            mstate = 0
        elif kind == 1:
            mstate = 1
        else:
            mstate = 2
        from2 = 0

    for s in symbols.tolist():
        if mode == 0:
            if s == 0:
                c[C_PREAMBLE] += 1
                continue
            mode, run, absorbed = (1 if s == 1 else 2), 0, 0
        elif mode == 1:
            if s == 0:
                run += 1
            else:
                complete(1 if run < delta else 2)
                mode, run, absorbed = (1 if s == 1 else 2), 0, 0
        elif mode == 2:
            if s == 2:
                complete(3)
                run, absorbed = 0, 0
            else:
                absorbed += 1
                if absorbed >= delta:
                    mode, run = 3, 0
        else:
            if s == 0:
                run += 1
            else:
                complete(4)
                mode, run, absorbed = (1 if s == 1 else 2), 0, 0

    scan[0], scan[1], scan[2], scan[3], scan[4] = mode, run, absorbed, mstate, from2
    for i in range(8):
        counts[i] = c[i]


def walk_batch(
    state: np.ndarray,
    runs: int,
    cum: np.ndarray,
    theta: float,
    threshold: float,
    step_cap: int,
    hist: np.ndarray,
) -> tuple[int, int]:
    """Run ``runs`` attack walks; add fork lengths into ``hist``.

    ``cum`` holds the three cumulative cut points of the step distribution
    (honest regular, adversary regular, honest iron; the rest is adversary
    iron). Returns ``(censored, total_steps)``.
    """
    s0, s1, s2, s3 = _load(state)
    c0, c1, c2 = float(cum[0]), float(cum[1]), float(cum[2])
    censored = 0
    total = 0
    hmax = hist.shape[0] - 1
    for _ in range(runs):
        x = 0
        y = 0
        down = 0
        steps = 0
        while True:
            r = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
            t = (s1 << 17) & MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = _rotl(s3, 45)
            u = (r >> 11) * _TWO_M53
            steps += 1
            if u < c0:
                x += 1
            elif u < c1:
                x -= 1
                down += 1
            elif u < c2:
                y += 1
            else:
                y -= 1
                down += 1
            if x + theta * y >= threshold:
                hist[min(down, hmax)] += 1
                break
            if steps >= step_cap:
                censored += 1
                break
        total += steps
    _store(state, s0, s1, s2, s3)
    return censored, total

