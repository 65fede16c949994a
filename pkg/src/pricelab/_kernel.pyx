# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation loop. Mirrors ``_kernel_py.simulate`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def simulate(
    const cnp.int64_t[::1] states,
    const double[::1] u_consider,
    const double[::1] u_convert,
    const double[::1] u_explore,
    const cnp.int64_t[::1] explore_actions,
    const double[::1] betas,
    const double[::1] conversion,
    const double[::1] prices,
    double[:, ::1] q_values,
    cnp.int64_t[:, ::1] visits,
    double alpha,
    double epsilon,
    Py_ssize_t batch_size,
    bint flush_residual,
    Py_ssize_t tracked_state,
    Py_ssize_t tracked_action,
):
    cdef Py_ssize_t n = states.shape[0]
    cdef Py_ssize_t n_states = q_values.shape[0]
    cdef Py_ssize_t n_actions = q_values.shape[1]
    cdef Py_ssize_t cap = batch_size if batch_size > 0 else 1

    rewards_arr = np.zeros(n, dtype=np.float64)
    actions_arr = np.zeros(n, dtype=np.int64)
    track_iter_arr = np.zeros(n, dtype=np.int64)
    track_q_arr = np.zeros(n, dtype=np.float64)
    track_r_arr = np.zeros(n, dtype=np.float64)
    buf_s_arr = np.zeros(cap, dtype=np.int64)
    buf_a_arr = np.zeros(cap, dtype=np.int64)
    cell_sum_arr = np.zeros((n_states, n_actions), dtype=np.float64)
    cell_cnt_arr = np.zeros((n_states, n_actions), dtype=np.int64)

    cdef double[::1] rewards = rewards_arr
    cdef cnp.int64_t[::1] actions = actions_arr
    cdef cnp.int64_t[::1] track_iter = track_iter_arr
    cdef double[::1] track_q = track_q_arr
    cdef double[::1] track_r = track_r_arr
    cdef cnp.int64_t[::1] buf_s = buf_s_arr
    cdef cnp.int64_t[::1] buf_a = buf_a_arr
    cdef double[:, ::1] cell_sum = cell_sum_arr
    cdef cnp.int64_t[:, ::1] cell_cnt = cell_cnt_arr

    cdef bint batch = batch_size > 0
    cdef double one_minus_alpha = 1.0 - alpha
    cdef Py_ssize_t t, j, s, a, i, s2, a2
    cdef Py_ssize_t buf_len = 0, n_track = 0, n_flushes = 0, residual
    cdef cnp.int64_t c
    cdef double r, best, mean

    for t in range(n):
        s = states[t]
        if u_explore[t] < epsilon:
            a = explore_actions[t]
        else:
            a = 0
            best = q_values[s, 0]
            for j in range(1, n_actions):
                if q_values[s, j] > best:
                    best = q_values[s, j]
                    a = j
        if u_consider[t] < betas[s] and u_convert[t] < conversion[a]:
            r = prices[a]
        else:
            r = 0.0
        rewards[t] = r
        actions[t] = a

        if batch:
            buf_s[buf_len] = s
            buf_a[buf_len] = a
            buf_len += 1
            cell_sum[s, a] += r
            cell_cnt[s, a] += 1
            if buf_len == batch_size:
                for i in range(buf_len):
                    s2 = buf_s[i]
                    a2 = buf_a[i]
                    c = cell_cnt[s2, a2]
                    if c > 0:
                        mean = cell_sum[s2, a2] / c
                        q_values[s2, a2] = one_minus_alpha * q_values[s2, a2] + alpha * mean
                        visits[s2, a2] += c
                        cell_sum[s2, a2] = 0.0
                        cell_cnt[s2, a2] = 0
                buf_len = 0
                n_flushes += 1
        else:
            q_values[s, a] = one_minus_alpha * q_values[s, a] + alpha * r
            visits[s, a] += 1

        if s == tracked_state and a == tracked_action:
            track_iter[n_track] = t + 1
            track_q[n_track] = q_values[s, a]
            track_r[n_track] = r
            n_track += 1

    residual = buf_len
    if batch and flush_residual and buf_len > 0:
        for i in range(buf_len):
            s2 = buf_s[i]
            a2 = buf_a[i]
            c = cell_cnt[s2, a2]
            if c > 0:
                mean = cell_sum[s2, a2] / c
                q_values[s2, a2] = one_minus_alpha * q_values[s2, a2] + alpha * mean
                visits[s2, a2] += c
                cell_sum[s2, a2] = 0.0
                cell_cnt[s2, a2] = 0
        n_flushes += 1

    return (
        rewards_arr,
        actions_arr,
        n_flushes,
        residual,
        track_iter_arr[:n_track].copy(),
        track_q_arr[:n_track].copy(),
        track_r_arr[:n_track].copy(),
    )
