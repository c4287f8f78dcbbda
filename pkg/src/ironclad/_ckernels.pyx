# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``; same algorithms, same streams."""

from libc.stdint cimport uint64_t, int64_t, uint8_t

cdef inline uint64_t _rotl(uint64_t x, int k) noexcept nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t _next(uint64_t* s) noexcept nogil:
    cdef uint64_t result = _rotl(s[1] * 5, 7) * 9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


cdef inline double _uniform(uint64_t* s) noexcept nogil:
    return <double>(_next(s) >> 11) * (1.0 / 9007199254740992.0)


def fill_symbols(uint64_t[::1] state, uint8_t[::1] out, double p_regular, double p_block):
    cdef uint64_t s[4]
    cdef Py_ssize_t i, n = out.shape[0]
    cdef double u
    s[0] = state[0]; s[1] = state[1]; s[2] = state[2]; s[3] = state[3]
    with nogil:
        for i in range(n):
            u = _uniform(s)
            if u < p_regular:
                out[i] = 1
            elif u < p_block:
                out[i] = 2
            else:
                out[i] = 0
    state[0] = s[0]; state[1] = s[1]; state[2] = s[2]; state[3] = s[3]


cdef inline void _complete(int kind, int64_t* c, int64_t* mstate, int64_t* from2) noexcept nogil:
    c[kind - 1] += 1
    if mstate[0] == 2:
        if kind == 4:
            mstate[0] = 0
            from2[0] = 1
        return
    if kind == 2:
        if mstate[0] == 0 and from2[0] == 0:
            c[4] += 1
        mstate[0] = 0
    elif kind == 4:
        if mstate[0] == 0:
            c[5] += 1
        else:
            c[6] += 1
        mstate[0] = 0
    elif kind == 1:
        mstate[0] = 1
    else:
        mstate[0] = 2
    from2[0] = 0


def alpha_scan(const uint8_t[::1] symbols, int64_t delta, int64_t[::1] scan, int64_t[::1] counts):
    cdef int64_t mode = scan[0], run = scan[1], absorbed = scan[2]
    cdef int64_t mstate = scan[3], from2 = scan[4]
    cdef int64_t c[8]
    cdef Py_ssize_t i, n = symbols.shape[0]
    cdef uint8_t s
    for i in range(8):
        c[i] = counts[i]
    with nogil:
        for i in range(n):
            s = symbols[i]
            if mode == 0:
                if s == 0:
                    c[7] += 1
                    continue
                mode = 1 if s == 1 else 2
                run = 0
                absorbed = 0
            elif mode == 1:
                if s == 0:
                    run += 1
                else:
                    _complete(1 if run < delta else 2, c, &mstate, &from2)
                    mode = 1 if s == 1 else 2
                    run = 0
                    absorbed = 0
            elif mode == 2:
                if s == 2:
                    _complete(3, c, &mstate, &from2)
                    run = 0
                    absorbed = 0
                else:
                    absorbed += 1
                    if absorbed >= delta:
                        mode = 3
                        run = 0
            else:
                if s == 0:
                    run += 1
                else:
                    _complete(4, c, &mstate, &from2)
                    mode = 1 if s == 1 else 2
                    run = 0
                    absorbed = 0
    scan[0] = mode; scan[1] = run; scan[2] = absorbed; scan[3] = mstate; scan[4] = from2
    for i in range(8):
        counts[i] = c[i]


def walk_batch(uint64_t[::1] state, int64_t runs, double[::1] cum, double theta,
               double threshold, int64_t step_cap, int64_t[::1] hist):
    cdef uint64_t s[4]
    cdef double c0 = cum[0], c1 = cum[1], c2 = cum[2], u
    cdef int64_t r, x, y, down, steps, censored = 0, total = 0
    cdef int64_t hmax = hist.shape[0] - 1
    s[0] = state[0]; s[1] = state[1]; s[2] = state[2]; s[3] = state[3]
    with nogil:
        for r in range(runs):
            x = 0
            y = 0
            down = 0
            steps = 0
            while True:
                u = _uniform(s)
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
                    hist[down if down < hmax else hmax] += 1
                    break
                if steps >= step_cap:
                    censored += 1
                    break
            total += steps
    state[0] = s[0]; state[1] = s[1]; state[2] = s[2]; state[3] = s[3]
    return censored, total
