"""Compiled slot-by-slot frame machine.

One implementation serves both single frames and Monte Carlo batches so the
two can never drift apart.  The RNG mirrors ``channel.RandomStream``
bit-for-bit.  Draw order is part of the replay contract:

* Session 1, per attempt: PR loss, then ST loss; after the terminal attempt
  one SR-overhearing draw per packet.
* Session 2 (SNC/ANC): per secondary packet, SR loss then PR loss.
* Coded slots: PR draw (if PR still needs its packet), then SR draw.
"""

import numba
import numpy as np
from numba import njit, prange

# try OpenMP before TBB; an outdated system TBB only produces a warning
numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

ARQ, SNC, ANC = 0, 1, 2

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SALT = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_UNIT = 2.0**-53


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_start(seed, index):
    return _mix64(_mix64(np.uint64(seed)) ^ (np.uint64(index) * _SALT))


@njit(cache=True, inline="always")
def _draw(rng):
    # rng[0]: counter, rng[1]: draws consumed
    rng[0] = rng[0] + _GOLDEN
    rng[1] = rng[1] + np.uint64(1)
    return float(_mix64(rng[0]) >> _S11) * _UNIT


@njit(cache=True)
def session1(p1, q, p12, n_p, cap, used, rng, pr_has, st_has, sr_has_p):
    """Stop-and-wait PT broadcast until PR or ST holds each primary packet.

    Returns (slots, outage).  ``used`` is the frame's slot count so far.
    """
    slots = 0
    for i in range(n_p):
        while True:
            if cap >= 0 and used + slots >= cap:
                return slots, True
            slots += 1
            pr_ok = _draw(rng) >= p1
            st_ok = _draw(rng) >= q
            if pr_ok or st_ok:
                pr_has[i] = pr_ok
                st_has[i] = st_ok
                break
        sr_has_p[i] = _draw(rng) >= p12
    return slots, False


@njit(cache=True)
def _unicast(ids, count, has, p, cap, used, rng):
    """Stop-and-wait each listed id to one receiver.  Returns (slots, outage)."""
    slots = 0
    for n in range(count):
        k = ids[n]
        while True:
            if cap >= 0 and used + slots >= cap:
                return slots, True
            slots += 1
            if _draw(rng) >= p:
                has[k] = True
                break
    return slots, False


@njit(cache=True)
def _missing(has, mask, want_mask, out):
    """Ascending ids with ``has`` False and ``mask == want_mask``; returns count."""
    n = 0
    for i in range(has.shape[0]):
        if not has[i] and mask[i] == want_mask:
            out[n] = i
            n += 1
    return n


@njit(cache=True)
def frame(scheme, p1, p2, p12, p21, q, n_p, n_s, cap, rng,
          pr_has, st_has, sr_has_p, sr_has_s, pr_has_s):
    """Run one frame.  Returns (b1, b2, b3, outage, coded_slots).

    ``cap < 0`` means unbounded.  On outage the slot count equals ``cap``.
    """
    b1, out = session1(p1, q, p12, n_p, cap, 0, rng, pr_has, st_has, sr_has_p)
    b2 = 0
    b3 = 0
    coded = 0
    if out:
        return b1, b2, b3, True, coded
    ids_p = np.empty(n_p, np.int64)
    ids_s = np.empty(n_s, np.int64)
    always = np.ones(max(n_p, n_s), np.bool_)

    if scheme == ARQ:
        k = _missing(pr_has, always[:n_p], True, ids_p)
        b2, out = _unicast(ids_p, k, pr_has, p21, cap, b1, rng)
        if out:
            return b1, b2, b3, True, coded
        k = _missing(sr_has_s, always[:n_s], True, ids_s)
        b3, out = _unicast(ids_s, k, sr_has_s, p2, cap, b1 + b2, rng)
        return b1, b2, b3, out, coded

    # SNC / ANC Session 2: every secondary packet exactly once
    for j in range(n_s):
        if cap >= 0 and b1 + b2 >= cap:
            return b1, b2, b3, True, coded
        b2 += 1
        sr_has_s[j] = _draw(rng) >= p2
        pr_has_s[j] = _draw(rng) >= p21

    used = b1 + b2
    enc_p = _missing(pr_has, sr_has_p, True, ids_p)
    enc_s = _missing(sr_has_s, pr_has_s, True, ids_s)

    if scheme == SNC:
        kmin = min(enc_p, enc_s)
        for n in range(kmin):
            a = ids_p[n]
            b = ids_s[n]
            while not (pr_has[a] and sr_has_s[b]):
                if cap >= 0 and used + b3 >= cap:
                    return b1, b2, b3, True, coded
                b3 += 1
                coded += 1
                if not pr_has[a] and _draw(rng) >= p21:
                    pr_has[a] = True
                if not sr_has_s[b] and _draw(rng) >= p2:
                    sr_has_s[b] = True
    else:
        ip = 0
        js = 0
        while ip < enc_p or js < enc_s:
            if cap >= 0 and used + b3 >= cap:
                return b1, b2, b3, True, coded
            b3 += 1
            if ip < enc_p and js < enc_s:
                coded += 1
            if ip < enc_p and _draw(rng) >= p21:
                pr_has[ids_p[ip]] = True
                ip += 1
            if js < enc_s and _draw(rng) >= p2:
                sr_has_s[ids_s[js]] = True
                js += 1

    # residual packets, primary first
    k = _missing(pr_has, always[:n_p], True, ids_p)
    s, out = _unicast(ids_p, k, pr_has, p21, cap, used + b3, rng)
    b3 += s
    if out:
        return b1, b2, b3, True, coded
    k = _missing(sr_has_s, always[:n_s], True, ids_s)
    s, out = _unicast(ids_s, k, sr_has_s, p2, cap, used + b3, rng)
    b3 += s
    return b1, b2, b3, out, coded


def _batch(scheme, p1, p2, p12, p21, q, n_p, n_s, cap, seed, first, trials, res):
    # res columns: b1, b2, b3, outage, coded, delivered_p, delivered_s
    for t in prange(trials):
        rng = np.empty(2, np.uint64)
        rng[0] = stream_start(seed, first + t)
        rng[1] = 0
        pr_has = np.zeros(n_p, np.bool_)
        st_has = np.zeros(n_p, np.bool_)
        sr_has_p = np.zeros(n_p, np.bool_)
        sr_has_s = np.zeros(n_s, np.bool_)
        pr_has_s = np.zeros(n_s, np.bool_)
        b1, b2, b3, out, coded = frame(scheme, p1, p2, p12, p21, q, n_p, n_s, cap, rng,
                                       pr_has, st_has, sr_has_p, sr_has_s, pr_has_s)
        res[t, 0] = b1
        res[t, 1] = b2
        res[t, 2] = b3
        res[t, 3] = 1 if out else 0
        res[t, 4] = coded
        res[t, 5] = pr_has.sum()
        res[t, 6] = sr_has_s.sum()


batch_serial = njit(cache=True)(_batch)
batch_parallel = njit(cache=True, parallel=True)(_batch)
