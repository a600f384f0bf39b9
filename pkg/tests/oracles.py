"""Independent reference implementations used to cross-check the package.

Everything here is written in the most direct way possible (window scans,
exhaustive enumeration, dense frequency grids, plain step-by-step
recursions) and shares no code with the package internals.
"""

import itertools

import numpy as np


# ---------------------------------------------------------------------------
# window constraints
# ---------------------------------------------------------------------------


def _longest_run(bits, value):
    best = run = 0
    for b in bits:
        run = run + 1 if b == value else 0
        best = max(best, run)
    return best


def oracle_satisfies(word, kind, r, s):
    """Plain scan over every complete window of length s."""
    word = tuple(word)
    for i in range(len(word) - s + 1):
        win = word[i:i + s]
        hits = sum(win)
        if kind == "anyhit" and hits < r:
            return False
        if kind == "rowhit" and _longest_run(win, 1) < r:
            return False
        if kind == "anymiss" and s - hits > r:
            return False
        if kind == "rowmiss" and _longest_run(win, 0) > r:
            return False
    return True


def live_suffixes(kind, r, s):
    """Length s-1 histories from which an infinite admissible continuation
    exists, computed as a greatest fixpoint over all 2^(s-1) histories."""
    live = set(itertools.product((0, 1), repeat=s - 1))
    while True:
        nxt = set()
        for h in live:
            for b in (0, 1):
                w = h + (b,)
                if oracle_satisfies(w, kind, r, s) and w[1:] in live:
                    nxt.add(h)
                    break
        if nxt == live:
            return live
        live = nxt


def oracle_extendable(word, kind, r, s, live=None):
    """True iff the word is admissible and extends to an infinite
    admissible sequence.

    For words of length >= s-1 extendability depends only on the last
    s-1 bits; shorter words are padded to that length first (padded
    words are too short to contain a complete window).
    """
    word = tuple(word)
    if live is None:
        live = live_suffixes(kind, r, s)
    if not oracle_satisfies(word, kind, r, s):
        return False
    keep = s - 1
    if len(word) >= keep:
        return word[len(word) - keep:] in live
    return any(word + ext in live
               for ext in itertools.product((0, 1), repeat=keep - len(word)))


def oracle_words(kind, r, s, length):
    """All admissible-and-extendable binary words of the given length."""
    live = live_suffixes(kind, r, s)
    return {
        w
        for w in itertools.product((0, 1), repeat=length)
        if oracle_extendable(w, kind, r, s, live)
    }


# ---------------------------------------------------------------------------
# LTI gain by dense frequency sweep
# ---------------------------------------------------------------------------


def oracle_lti_gain(A, B, C, D, n_grid=20001):
    """l2 gain of a stable discrete-time LTI system as the peak largest
    singular value of the transfer matrix over a dense frequency grid."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    eye = np.eye(A.shape[0])
    best = 0.0
    for omega in np.linspace(0.0, np.pi, n_grid):
        H = C @ np.linalg.solve(np.exp(1j * omega) * eye - A, B) + D
        best = max(best, float(np.linalg.svd(H, compute_uv=False)[0]))
    return best


# ---------------------------------------------------------------------------
# step-by-step closed-loop recursion
# ---------------------------------------------------------------------------


def oracle_closed_loop_run(A, B, Bw, C, D, Dw, K, mu, w, strategy="zero",
                           x0=None):
    """Run the lossy closed loop one sample at a time.

    Returns (states, applied inputs, outputs) as arrays; states has one
    extra row for the terminal state.
    """
    A, B, Bw = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Bw))
    C, D, Dw = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (C, D, Dw))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    n, m = A.shape[0], B.shape[1]
    horizon = len(mu)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    u_held = np.zeros(m)
    xs = [x.copy()]
    us, zs = [], []
    for k in range(horizon):
        if mu[k]:
            u = K @ x
            u_held = u
        elif strategy == "hold":
            u = u_held
        else:
            u = np.zeros(m)
        zs.append(C @ x + D @ u + Dw @ w[k])
        x = A @ x + B @ u + Bw @ w[k]
        xs.append(x.copy())
        us.append(u)
    return np.array(xs), np.array(us), np.array(zs)
