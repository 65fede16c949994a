"""Pure-Python simulation loop, used when the compiled kernel is unavailable.

Must stay bit-identical to ``_kernel.pyx``: same draws consumed per step, same
floating point expressions in the same order.
"""

from __future__ import annotations

import numpy as np


def simulate(
    states,
    u_consider,
    u_convert,
    u_explore,
    explore_actions,
    betas,
    conversion,
    prices,
    q_values,
    visits,
    alpha,
    epsilon,
    batch_size,
    flush_residual,
    tracked_state,
    tracked_action,
):
    n = len(states)
    n_states, n_actions = q_values.shape
    # python lists are much faster than numpy scalar indexing in a tight loop
    q = q_values.tolist()
    vis = visits.tolist()
    states_l = states.tolist()
    uc = u_consider.tolist()
    uv = u_convert.tolist()
    ue = u_explore.tolist()
    ea = explore_actions.tolist()
    beta_l = betas.tolist()
    conv_l = conversion.tolist()
    price_l = prices.tolist()

    rewards = [0.0] * n
    actions = [0] * n
    track_iter = []
    track_q = []
    track_r = []

    batch = batch_size > 0
    buf_s = []
    buf_a = []
    cell_sum = [[0.0] * n_actions for _ in range(n_states)]
    cell_cnt = [[0] * n_actions for _ in range(n_states)]
    n_flushes = 0
    one_minus_alpha = 1.0 - alpha

    def do_flush():
        for s_, a_ in zip(buf_s, buf_a):
            c = cell_cnt[s_][a_]
            if c > 0:
                mean = cell_sum[s_][a_] / c
                q[s_][a_] = one_minus_alpha * q[s_][a_] + alpha * mean
                vis[s_][a_] += c
                cell_sum[s_][a_] = 0.0
                cell_cnt[s_][a_] = 0
        buf_s.clear()
        buf_a.clear()

    for t in range(n):
        s = states_l[t]
        row = q[s]
        if ue[t] < epsilon:
            a = ea[t]
        else:
            a = 0
            best = row[0]
            for j in range(1, n_actions):
                if row[j] > best:
                    best = row[j]
                    a = j
        if uc[t] < beta_l[s] and uv[t] < conv_l[a]:
            r = price_l[a]
        else:
            r = 0.0
        rewards[t] = r
        actions[t] = a

        if batch:
            buf_s.append(s)
            buf_a.append(a)
            cell_sum[s][a] += r
            cell_cnt[s][a] += 1
            if len(buf_s) == batch_size:
                do_flush()
                n_flushes += 1
        else:
            row[a] = one_minus_alpha * row[a] + alpha * r
            vis[s][a] += 1

        if s == tracked_state and a == tracked_action:
            track_iter.append(t + 1)
            track_q.append(q[s][a])
            track_r.append(r)

    residual = len(buf_s)
    if batch and flush_residual and residual:
        do_flush()
        n_flushes += 1

    q_values[:, :] = np.asarray(q, dtype=np.float64)
    visits[:, :] = np.asarray(vis, dtype=np.int64)
    return (
        np.asarray(rewards, dtype=np.float64),
        np.asarray(actions, dtype=np.int64),
        n_flushes,
        residual,
        np.asarray(track_iter, dtype=np.int64),
        np.asarray(track_q, dtype=np.float64),
        np.asarray(track_r, dtype=np.float64),
    )
