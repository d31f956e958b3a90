"""Independent reference implementations used as test oracles."""
import json

import numpy as np


def gillespie_final_size(N, I0, b, c, mu, rng):
    """Final number ever infected (excluding the initial ones) of the Markov SIR chain.

    Infection rate ``S/N * b * c * I``, recovery rate ``mu * I``.
    """
    S, I = N - I0, I0
    new = 0
    while I > 0:
        inf = S / N * b * c * I
        rec = mu * I
        if rng.random() * (inf + rec) < inf:
            S -= 1
            I += 1
            new += 1
        else:
            I -= 1
    return new


def rk4(f, y0, t):
    """Classical fourth-order Runge-Kutta on the grid ``t``."""
    y = np.empty((len(t), len(y0)))
    y[0] = y0
    for n in range(len(t) - 1):
        h = t[n + 1] - t[n]
        k1 = f(y[n])
        k2 = f(y[n] + 0.5 * h * k1)
        k3 = f(y[n] + 0.5 * h * k2)
        k4 = f(y[n] + h * k3)
        y[n + 1] = y[n] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def kendall_sir(S0, I0, b, c, mu, t):
    """``S' = -S b c I``, ``I' = S b c I - mu I`` by RK4 on a 10x refined grid."""
    fine = np.linspace(t[0], t[-1], 10 * (len(t) - 1) + 1)
    y = rk4(lambda y: np.array([-y[0] * b * c * y[1], y[0] * b * c * y[1] - mu * y[1]]), np.array([S0, I0]), fine)
    return y[::10]


def logistic_sis(I0, b, c, mu, t):
    fine = np.linspace(t[0], t[-1], 10 * (len(t) - 1) + 1)
    y = rk4(lambda y: np.array([(1 - y[0]) * b * c * y[0] - mu * y[0]]), np.array([I0]), fine)
    return y[::10, 0]


def read_event_log(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if not line.startswith('{"metadata"')]


def replay_counts(events, K, B, S0, R0, model="SIR"):
    """Yield ``(time, S, I, R)`` after every event by bookkeeping alone."""
    S, I, R = np.array(S0), np.zeros(K, dtype=int), np.array(R0)
    for e in events:
        k = e["location"]
        if e["type"] == "initial":
            I[k] += 1
            continue
        if e["type"] == "infection":
            S[k] -= 1
            I[k] += 1
        else:
            I[k] -= 1
            if model == "SIS":
                S[k] += 1
            else:
                R[k] += 1
        yield e["time"], S.copy(), I.copy(), R.copy()


def replay_age_field(events, K, t, ages, scale):
    """Scaled count of infected at time ``t`` by age, from the event log only."""
    start, initial, recovered = {}, {}, {}
    for e in events:
        if e["type"] == "recovery":
            recovered[e["id"]] = e["time"]
        else:
            start[e["id"]] = (e["time"], e["location"])
            initial[e["id"]] = e["type"] == "initial"
    out = np.zeros((len(ages), K))
    for j, (tau, k) in start.items():
        if tau > t or recovered.get(j, np.inf) <= t:
            continue
        for i, a in enumerate(ages):
            if initial[j]:
                hit = t - tau <= a
            else:
                hit = max(t - a, 0.0) < tau
            out[i, k] += hit
    return out / scale
