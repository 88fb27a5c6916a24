# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled chain engine.

Mirrors the pure Python engine exactly in algorithm: nested
sweeps / updates / split-merge proposals, full-conditional resampling
of y, z, theta, beta, and both the literal and the corrected acceptance
rules.  Cluster membership lives in slot-indexed linked lists so a
proposal touches only the records of the affected clusters.  All
randomness flows through one counter-based bit generator.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport INFINITY, exp, log, log1p
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_beta,
    random_bounded_uint64,
    random_standard_gamma,
    random_standard_uniform,
)

from .sampler import ConsistencyError

cnp.import_array()

cdef double LOG_HALF = -0.6931471805599453
cdef double LOG_TWO = 0.6931471805599453
cdef double THETA_FLOOR = 1e-300


cdef class _Chain:
    cdef bitgen_t *bg
    cdef object _bitgen_ref
    cdef dict arrays

    cdef Py_ssize_t n, p, k, n_blocks
    cdef cnp.int64_t mmax
    cdef int mode, corrected, debug
    cdef long long sweeps, updates, inner, burn_in, thin
    cdef bint store_theta

    cdef cnp.int64_t[:, ::1] x
    cdef cnp.int32_t[::1] file_id
    cdef cnp.int64_t[::1] levels
    cdef cnp.uint8_t[::1] blocked
    cdef double[::1] a
    cdef double[::1] b
    cdef double[:, ::1] mu

    cdef cnp.int64_t[::1] block_order
    cdef cnp.int64_t[::1] block_start
    cdef cnp.int64_t[::1] cum_pairs
    cdef cnp.int64_t total_pairs

    cdef cnp.int64_t[::1] lam
    cdef cnp.int64_t[:, ::1] yv
    cdef cnp.uint8_t[:, ::1] z
    cdef double[:, ::1] theta, cumtheta, logtheta, pz1, counts
    cdef double[::1] beta, logbeta, log1mbeta

    cdef cnp.int64_t[::1] head, tail, nxt, size
    cdef cnp.int64_t[::1] occ_list, occ_pos
    cdef Py_ssize_t occ_count
    cdef cnp.int64_t[::1] free_stack
    cdef Py_ssize_t free_top

    cdef cnp.int64_t[::1] mem_a, mem_b, mem_c
    cdef cnp.int64_t[::1] obs_vals, obs_cnt, val_mark, val_slot
    cdef double[::1] lse_terms, wbuf, gamma_buf
    cdef cnp.int64_t[::1] file_mark
    cdef cnp.int64_t mark_stamp, file_stamp

    cdef long long proposals, accepted, merges, splits, conflicts
    cdef long long exhausted, states_checked

    def __init__(self, problem, config, seed_seq):
        self._bitgen_ref = np.random.Philox(seed_seq)
        capsule = self._bitgen_ref.capsule
        self.bg = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")
        if self.bg == NULL:
            raise RuntimeError("could not acquire bit generator state")

        x = np.ascontiguousarray(problem.x, dtype=np.int64)
        self.n = x.shape[0]
        self.p = x.shape[1]
        self.k = problem.data.k
        self.x = x
        self.file_id = np.ascontiguousarray(problem.file_id, dtype=np.int32)
        self.levels = np.ascontiguousarray(problem.levels, dtype=np.int64)
        self.mmax = int(problem.levels.max())
        self.blocked = np.ascontiguousarray(problem.blocked, dtype=np.uint8)
        self.a = np.ascontiguousarray(problem.a, dtype=np.float64)
        self.b = np.ascontiguousarray(problem.b, dtype=np.float64)
        self.mu = np.ascontiguousarray(problem.mu_pad, dtype=np.float64)

        self.block_order = np.ascontiguousarray(problem.block_order, np.int64)
        self.block_start = np.ascontiguousarray(problem.block_start, np.int64)
        cum = np.cumsum(problem.pair_counts).astype(np.int64)
        self.cum_pairs = cum
        self.n_blocks = cum.shape[0]
        self.total_pairs = int(cum[-1]) if cum.shape[0] else 0

        self.mode = 0 if problem.mode.value == "link" else 1
        self.corrected = 1 if config.corrected else 0
        self.debug = 1 if config.debug_checks else 0
        self.sweeps = config.sweeps
        self.updates = config.updates_per_sweep
        self.inner = config.proposals_per_update
        self.burn_in = config.burn_in
        self.thin = config.thin
        self.store_theta = bool(config.store_theta)

        n, p, mmax = self.n, self.p, int(self.mmax)
        arr = {
            "lam": np.arange(n, dtype=np.int64),
            "yv": x.copy(),
            "z": np.zeros((n, p), dtype=np.uint8),
            "theta": np.zeros((p, mmax)),
            "beta": np.zeros(p),
        }
        self.arrays = arr
        self.lam = arr["lam"]
        self.yv = arr["yv"]
        self.z = arr["z"]
        self.theta = arr["theta"]
        self.beta = arr["beta"]
        self.cumtheta = np.zeros((p, mmax))
        self.logtheta = np.zeros((p, mmax))
        self.pz1 = np.zeros((p, mmax))
        self.counts = np.zeros((p, mmax))
        self.logbeta = np.zeros(p)
        self.log1mbeta = np.zeros(p)

        self.head = np.arange(n, dtype=np.int64)
        self.tail = np.arange(n, dtype=np.int64)
        self.nxt = np.full(n, -1, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)
        self.occ_list = np.arange(n, dtype=np.int64)
        self.occ_pos = np.arange(n, dtype=np.int64)
        self.occ_count = n
        self.free_stack = np.zeros(n, dtype=np.int64)
        self.free_top = 0

        self.mem_a = np.zeros(n, dtype=np.int64)
        self.mem_b = np.zeros(n, dtype=np.int64)
        self.mem_c = np.zeros(n, dtype=np.int64)
        self.obs_vals = np.zeros(n, dtype=np.int64)
        self.obs_cnt = np.zeros(n, dtype=np.int64)
        self.val_mark = np.full(mmax, -1, dtype=np.int64)
        self.val_slot = np.zeros(mmax, dtype=np.int64)
        self.lse_terms = np.zeros(n + 1)
        self.wbuf = np.zeros(mmax)
        self.gamma_buf = np.zeros(mmax)
        self.file_mark = np.full(self.k, -1, dtype=np.int64)
        self.mark_stamp = 0
        self.file_stamp = 0

        self.proposals = self.accepted = self.merges = self.splits = 0
        self.conflicts = self.exhausted = self.states_checked = 0

        self._init_theta_beta()

    # -- random primitives ------------------------------------------------

    cdef inline cnp.int64_t _randbelow(self, cnp.int64_t n):
        return <cnp.int64_t> random_bounded_uint64(
            self.bg, 0, <cnp.uint64_t> (n - 1), 0, 0
        )

    cdef inline cnp.int64_t _draw_cum(self, Py_ssize_t l):
        cdef cnp.int64_t M = self.levels[l]
        cdef double u = random_standard_uniform(self.bg) * self.cumtheta[l, M - 1]
        cdef cnp.int64_t lo = 0, hi = M - 1, mid
        while lo < hi:
            mid = (lo + hi) >> 1
            if self.cumtheta[l, mid] > u:
                hi = mid
            else:
                lo = mid + 1
        return lo

    cdef inline bint _accept(self, double delta):
        if delta >= 0:
            return True
        if delta == -INFINITY or delta != delta:
            return False
        return log(random_standard_uniform(self.bg)) < delta

    # -- theta / beta -----------------------------------------------------

    cdef int _init_theta_beta(self) except -1:
        cdef Py_ssize_t l, m
        cdef cnp.int64_t M
        for l in range(self.p):
            M = self.levels[l]
            for m in range(M):
                self.counts[l, m] = self.mu[l, m]
        self._draw_theta()
        for l in range(self.p):
            if self.blocked[l]:
                self.beta[l] = 0.0
            else:
                self.beta[l] = random_beta(self.bg, self.a[l], self.b[l])
        self._refresh_tables()
        return 0

    cdef int _draw_theta(self) except -1:
        cdef Py_ssize_t l, m
        cdef cnp.int64_t M
        cdef double tot, th
        for l in range(self.p):
            M = self.levels[l]
            tot = 0.0
            for m in range(M):
                self.gamma_buf[m] = random_standard_gamma(self.bg, self.counts[l, m])
                tot += self.gamma_buf[m]
            if tot <= 0.0:
                for m in range(M):
                    self.theta[l, m] = 1.0 / M
                continue
            for m in range(M):
                th = self.gamma_buf[m] / tot
                self.theta[l, m] = th if th > THETA_FLOOR else THETA_FLOOR
        return 0

    cdef int _resample_theta_beta(self) except -1:
        cdef Py_ssize_t ci, l, m
        cdef cnp.int64_t slot, r, M, zsum
        for l in range(self.p):
            M = self.levels[l]
            for m in range(M):
                self.counts[l, m] = self.mu[l, m]
        for ci in range(self.occ_count):
            slot = self.occ_list[ci]
            for l in range(self.p):
                self.counts[l, self.yv[slot, l]] += 1.0
        for r in range(self.n):
            for l in range(self.p):
                if self.z[r, l]:
                    self.counts[l, self.x[r, l]] += 1.0
        self._draw_theta()
        for l in range(self.p):
            if self.blocked[l]:
                self.beta[l] = 0.0
                continue
            zsum = 0
            for r in range(self.n):
                zsum += self.z[r, l]
            self.beta[l] = random_beta(
                self.bg, self.a[l] + zsum, self.b[l] + (self.n - zsum)
            )
        self._refresh_tables()
        return 0

    cdef void _refresh_tables(self):
        cdef Py_ssize_t l, m
        cdef cnp.int64_t M
        cdef double c, th, bt
        for l in range(self.p):
            M = self.levels[l]
            bt = self.beta[l]
            c = 0.0
            for m in range(M):
                th = self.theta[l, m]
                c += th
                self.cumtheta[l, m] = c
                self.logtheta[l, m] = log(th)
                if bt > 0.0:
                    self.pz1[l, m] = bt * th / (bt * th + (1.0 - bt))
                else:
                    self.pz1[l, m] = 0.0
            self.logbeta[l] = log(bt) if bt > 0.0 else -INFINITY
            self.log1mbeta[l] = log1p(-bt) if bt < 1.0 else -INFINITY

    # -- y and z ----------------------------------------------------------

    cdef int _resample_yz(self) except -1:
        cdef Py_ssize_t ci, l
        cdef cnp.int64_t slot, r, pinned
        for ci in range(self.occ_count):
            slot = self.occ_list[ci]
            for l in range(self.p):
                pinned = -1
                r = self.head[slot]
                while r != -1:
                    if self.z[r, l] == 0:
                        pinned = self.x[r, l]
                        break
                    r = self.nxt[r]
                if pinned >= 0:
                    self.yv[slot, l] = pinned
                else:
                    self.yv[slot, l] = self._draw_cum(l)
        for r in range(self.n):
            slot = self.lam[r]
            for l in range(self.p):
                if self.blocked[l]:
                    self.z[r, l] = 0
                elif self.x[r, l] != self.yv[slot, l]:
                    self.z[r, l] = 1
                else:
                    self.z[r, l] = (
                        random_standard_uniform(self.bg)
                        < self.pz1[l, self.x[r, l]]
                    )
        return 0

    # -- scoring ----------------------------------------------------------

    cdef double _score_current(self, cnp.int64_t slot):
        cdef double s = 0.0
        cdef Py_ssize_t l
        cdef cnp.int64_t r
        for l in range(self.p):
            s += self.logtheta[l, self.yv[slot, l]]
        r = self.head[slot]
        while r != -1:
            for l in range(self.p):
                if self.z[r, l]:
                    s += self.logbeta[l] + self.logtheta[l, self.x[r, l]]
                else:
                    s += self.log1mbeta[l]
            r = self.nxt[r]
        return s

    cdef double _score_minimal(
        self, cnp.int64_t[::1] mem, Py_ssize_t start, Py_ssize_t stop,
        cnp.int64_t rseed,
    ):
        cdef double s = 0.0
        cdef Py_ssize_t l, i
        cdef cnp.int64_t yval, rr
        for l in range(self.p):
            yval = self.x[rseed, l]
            s += self.logtheta[l, yval]
            for i in range(start, stop):
                rr = mem[i]
                if self.x[rr, l] != yval:
                    s += self.logbeta[l] + self.logtheta[l, self.x[rr, l]]
                else:
                    s += self.log1mbeta[l]
        return s

    cdef double _logf_field(
        self, cnp.int64_t[::1] mem, Py_ssize_t start, Py_ssize_t stop,
        Py_ssize_t l,
    ):
        """Cluster-field likelihood with y and z integrated out."""
        cdef double bt = self.beta[l]
        cdef Py_ssize_t i, nobs, nterm
        cdef cnp.int64_t v, c, v0
        cdef double base, thsum, mx, t, th, rem, ssum
        if self.blocked[l] or bt == 0.0:
            v0 = self.x[mem[start], l]
            for i in range(start + 1, stop):
                if self.x[mem[i], l] != v0:
                    return -INFINITY
            return self.logtheta[l, v0]
        self.mark_stamp += 1
        nobs = 0
        for i in range(start, stop):
            v = self.x[mem[i], l]
            if self.val_mark[v] == self.mark_stamp:
                self.obs_cnt[self.val_slot[v]] += 1
            else:
                self.val_mark[v] = self.mark_stamp
                self.val_slot[v] = nobs
                self.obs_vals[nobs] = v
                self.obs_cnt[nobs] = 1
                nobs += 1
        base = 0.0
        thsum = 0.0
        mx = -INFINITY
        for i in range(nobs):
            v = self.obs_vals[i]
            c = self.obs_cnt[i]
            th = self.theta[l, v]
            base += c * (self.logbeta[l] + self.logtheta[l, v])
            t = self.logtheta[l, v] + c * log1p((1.0 - bt) / (bt * th))
            self.lse_terms[i] = t
            thsum += th
            if t > mx:
                mx = t
        nterm = nobs
        rem = 1.0 - thsum
        if rem > 0.0:
            t = log(rem)
            self.lse_terms[nterm] = t
            nterm += 1
            if t > mx:
                mx = t
        ssum = 0.0
        for i in range(nterm):
            ssum += exp(self.lse_terms[i] - mx)
        return base + mx + log(ssum)

    cdef double _logf(
        self, cnp.int64_t[::1] mem, Py_ssize_t start, Py_ssize_t stop
    ):
        cdef double tot = 0.0
        cdef Py_ssize_t l
        for l in range(self.p):
            tot += self._logf_field(mem, start, stop, l)
            if tot == -INFINITY:
                return tot
        return tot

    cdef int _redraw_cluster(
        self, cnp.int64_t slot, cnp.int64_t[::1] mem,
        Py_ssize_t start, Py_ssize_t stop,
    ) except -1:
        """Draw (y, z) of one cluster from their exact conditionals."""
        cdef Py_ssize_t l, i, nobs
        cdef cnp.int64_t M, v, rr, yval, m
        cdef double bt, mx, tot, u, acc, w
        for l in range(self.p):
            M = self.levels[l]
            bt = self.beta[l]
            if self.blocked[l] or bt == 0.0:
                self.yv[slot, l] = self.x[mem[start], l]
                for i in range(start, stop):
                    self.z[mem[i], l] = 0
                continue
            self.mark_stamp += 1
            nobs = 0
            for i in range(start, stop):
                v = self.x[mem[i], l]
                if self.val_mark[v] == self.mark_stamp:
                    self.obs_cnt[self.val_slot[v]] += 1
                else:
                    self.val_mark[v] = self.mark_stamp
                    self.val_slot[v] = nobs
                    self.obs_vals[nobs] = v
                    self.obs_cnt[nobs] = 1
                    nobs += 1
            for m in range(M):
                self.wbuf[m] = self.logtheta[l, m]
            for i in range(nobs):
                v = self.obs_vals[i]
                self.wbuf[v] += self.obs_cnt[i] * log1p(
                    (1.0 - bt) / (bt * self.theta[l, v])
                )
            mx = -INFINITY
            for m in range(M):
                if self.wbuf[m] > mx:
                    mx = self.wbuf[m]
            tot = 0.0
            for m in range(M):
                w = exp(self.wbuf[m] - mx)
                self.wbuf[m] = w
                tot += w
            u = random_standard_uniform(self.bg) * tot
            yval = M - 1
            acc = 0.0
            for m in range(M):
                acc += self.wbuf[m]
                if u < acc:
                    yval = m
                    break
            self.yv[slot, l] = yval
            for i in range(start, stop):
                rr = mem[i]
                if self.x[rr, l] != yval:
                    self.z[rr, l] = 1
                else:
                    self.z[rr, l] = (
                        random_standard_uniform(self.bg)
                        < self.pz1[l, self.x[rr, l]]
                    )
        return 0

    # -- cluster bookkeeping ----------------------------------------------

    cdef void _occ_add(self, cnp.int64_t slot):
        self.occ_list[self.occ_count] = slot
        self.occ_pos[slot] = self.occ_count
        self.occ_count += 1

    cdef void _occ_remove(self, cnp.int64_t slot):
        cdef Py_ssize_t pos = self.occ_pos[slot]
        cdef cnp.int64_t last = self.occ_list[self.occ_count - 1]
        self.occ_list[pos] = last
        self.occ_pos[last] = pos
        self.occ_count -= 1

    # -- split-merge ------------------------------------------------------

    cdef int _draw_pair(self, cnp.int64_t *pr1, cnp.int64_t *pr2) except -1:
        """Uniform draw over all eligible pairs; 1 means none exist."""
        if self.total_pairs == 0:
            return 1
        cdef cnp.int64_t t = self._randbelow(self.total_pairs)
        cdef Py_ssize_t lo = 0, hi = self.n_blocks - 1, mid
        while lo < hi:
            mid = (lo + hi) >> 1
            if self.cum_pairs[mid] > t:
                hi = mid
            else:
                lo = mid + 1
        cdef cnp.int64_t s0 = self.block_start[lo]
        cdef cnp.int64_t bs = self.block_start[lo + 1] - s0
        cdef cnp.int64_t i, j, r1, r2
        while True:
            i = self._randbelow(bs)
            j = self._randbelow(bs - 1)
            if j >= i:
                j += 1
            r1 = self.block_order[s0 + i]
            r2 = self.block_order[s0 + j]
            if self.mode == 0 and self.file_id[r1] == self.file_id[r2]:
                continue
            pr1[0] = r1
            pr2[0] = r2
            return 0

    cdef int _step(self) except -1:
        cdef cnp.int64_t r1 = 0, r2 = 0
        if self._draw_pair(&r1, &r2):
            self.exhausted += 1
            return 0
        self.proposals += 1
        cdef cnp.int64_t c1 = self.lam[r1], c2 = self.lam[r2]
        if c1 != c2:
            self._try_merge(r1, r2, c1, c2)
        else:
            self._try_split(r1, r2, c1)
        return 0

    cdef int _try_merge(
        self, cnp.int64_t r1, cnp.int64_t r2, cnp.int64_t c1, cnp.int64_t c2
    ) except -1:
        cdef Py_ssize_t la, lc, i, l
        cdef cnp.int64_t r, rr, yval
        lc = 0
        r = self.head[c1]
        while r != -1:
            self.mem_c[lc] = r
            lc += 1
            r = self.nxt[r]
        la = lc
        r = self.head[c2]
        while r != -1:
            self.mem_c[lc] = r
            lc += 1
            r = self.nxt[r]
        if self.mode == 0:
            self.file_stamp += 1
            for i in range(la):
                self.file_mark[self.file_id[self.mem_c[i]]] = self.file_stamp
            for i in range(la, lc):
                if self.file_mark[self.file_id[self.mem_c[i]]] == self.file_stamp:
                    self.conflicts += 1
                    return 0
        cdef cnp.int64_t rlow = r1 if r1 < r2 else r2
        cdef double delta
        if self.corrected:
            delta = (
                self._logf(self.mem_c, 0, lc)
                - self._logf(self.mem_c, 0, la)
                - self._logf(self.mem_c, la, lc)
                + (lc - 2) * LOG_HALF
                - log(<double> (self.n - self.occ_count + 1))
            )
        else:
            delta = (
                self._score_minimal(self.mem_c, 0, lc, rlow)
                - self._score_current(c1)
                - self._score_current(c2)
            )
        if not self._accept(delta):
            return 0
        self.accepted += 1
        self.merges += 1
        cdef cnp.int64_t keep = self.lam[rlow]
        cdef cnp.int64_t gone = c2 if keep == c1 else c1
        r = self.head[gone]
        while r != -1:
            self.lam[r] = keep
            r = self.nxt[r]
        self.nxt[self.tail[keep]] = self.head[gone]
        self.tail[keep] = self.tail[gone]
        self.size[keep] += self.size[gone]
        self.head[gone] = -1
        self.size[gone] = 0
        self._occ_remove(gone)
        self.free_stack[self.free_top] = gone
        self.free_top += 1
        if self.corrected:
            self._redraw_cluster(keep, self.mem_c, 0, lc)
        else:
            for l in range(self.p):
                yval = self.x[rlow, l]
                self.yv[keep, l] = yval
                for i in range(lc):
                    rr = self.mem_c[i]
                    self.z[rr, l] = 1 if self.x[rr, l] != yval else 0
        return 0

    cdef int _try_split(
        self, cnp.int64_t r1, cnp.int64_t r2, cnp.int64_t c
    ) except -1:
        cdef Py_ssize_t lc, na, nb, i, l
        cdef cnp.int64_t r, rr, yval
        cdef cnp.int32_t f1, f2, fr
        lc = 0
        r = self.head[c]
        while r != -1:
            self.mem_c[lc] = r
            lc += 1
            r = self.nxt[r]
        na = nb = 0
        self.mem_a[na] = r1
        na += 1
        self.mem_b[nb] = r2
        nb += 1
        f1 = self.file_id[r1]
        f2 = self.file_id[r2]
        for i in range(lc):
            rr = self.mem_c[i]
            if rr == r1 or rr == r2:
                continue
            if self.mode == 0:
                fr = self.file_id[rr]
                if fr == f1 and fr == f2:
                    return 0  # both sides blocked: auto-reject
                if fr == f1:
                    self.mem_b[nb] = rr
                    nb += 1
                    continue
                if fr == f2:
                    self.mem_a[na] = rr
                    na += 1
                    continue
            if random_standard_uniform(self.bg) < 0.5:
                self.mem_a[na] = rr
                na += 1
            else:
                self.mem_b[nb] = rr
                nb += 1
        cdef double delta
        if self.corrected:
            delta = (
                self._logf(self.mem_a, 0, na)
                + self._logf(self.mem_b, 0, nb)
                - self._logf(self.mem_c, 0, lc)
                + (lc - 2) * LOG_TWO
                + log(<double> (self.n - self.occ_count))
            )
        else:
            delta = (
                self._score_minimal(self.mem_a, 0, na, r1)
                + self._score_minimal(self.mem_b, 0, nb, r2)
                - self._score_current(c)
            )
        if not self._accept(delta):
            return 0
        self.accepted += 1
        self.splits += 1
        cdef cnp.int64_t slot_b = self.free_stack[self.free_top - 1]
        self.free_top -= 1
        self._occ_add(slot_b)
        self._relink(c, self.mem_a, na)
        self._relink(slot_b, self.mem_b, nb)
        for i in range(nb):
            self.lam[self.mem_b[i]] = slot_b
        if self.corrected:
            self._redraw_cluster(c, self.mem_a, 0, na)
            self._redraw_cluster(slot_b, self.mem_b, 0, nb)
        else:
            for l in range(self.p):
                yval = self.x[r1, l]
                self.yv[c, l] = yval
                for i in range(na):
                    rr = self.mem_a[i]
                    self.z[rr, l] = 1 if self.x[rr, l] != yval else 0
                yval = self.x[r2, l]
                self.yv[slot_b, l] = yval
                for i in range(nb):
                    rr = self.mem_b[i]
                    self.z[rr, l] = 1 if self.x[rr, l] != yval else 0
        return 0

    cdef void _relink(self, cnp.int64_t slot, cnp.int64_t[::1] mem, Py_ssize_t m):
        cdef Py_ssize_t i
        self.head[slot] = mem[0]
        for i in range(m - 1):
            self.nxt[mem[i]] = mem[i + 1]
        self.nxt[mem[m - 1]] = -1
        self.tail[slot] = mem[m - 1]
        self.size[slot] = m

    # -- invariants ---------------------------------------------------------

    cdef int _debug_check(self) except -1:
        cdef Py_ssize_t ci, l
        cdef cnp.int64_t slot, r, cnt, total = 0
        for ci in range(self.occ_count):
            slot = self.occ_list[ci]
            if self.size[slot] <= 0:
                raise ConsistencyError("occupied cluster with size 0")
            if self.occ_pos[slot] != ci:
                raise ConsistencyError("occupied-slot index out of sync")
            cnt = 0
            self.file_stamp += 1
            r = self.head[slot]
            while r != -1:
                if self.lam[r] != slot:
                    raise ConsistencyError("membership list disagrees with lam")
                if self.mode == 0:
                    if self.file_mark[self.file_id[r]] == self.file_stamp:
                        raise ConsistencyError(
                            "two records of one file share an individual"
                        )
                    self.file_mark[self.file_id[r]] = self.file_stamp
                for l in range(self.p):
                    if self.z[r, l] == 0 and self.x[r, l] != self.yv[slot, l]:
                        raise ConsistencyError("z = 0 cell disagrees with y")
                    if self.blocked[l] and self.z[r, l] != 0:
                        raise ConsistencyError(
                            "distortion flag set on a distortion-free field"
                        )
                cnt += 1
                r = self.nxt[r]
            if cnt != self.size[slot]:
                raise ConsistencyError("cluster size out of sync")
            total += cnt
        if total != self.n:
            raise ConsistencyError("membership lists lost records")
        for l in range(self.p):
            if self.beta[l] < 0.0 or self.beta[l] > 1.0:
                raise ConsistencyError("beta outside [0, 1]")
            if self.blocked[l] and self.beta[l] != 0.0:
                raise ConsistencyError("beta nonzero on distortion-free field")
        return 0

    # -- driver -------------------------------------------------------------

    def run(self, progress=None, long long progress_every=0):
        cdef long long sweep, u, t
        cdef long long n_stored = (self.sweeps - self.burn_in) // self.thin
        cdef Py_ssize_t stored = 0, l, m, rr
        partitions = np.empty((n_stored, self.n), dtype=np.int64)
        beta_out = np.empty((n_stored, self.p))
        theta_out = (
            np.empty((n_stored, self.p, self.mmax)) if self.store_theta else None
        )
        cdef cnp.int64_t[:, ::1] part_v = partitions
        cdef double[:, ::1] beta_v = beta_out
        cdef double[:, :, ::1] theta_v = theta_out if self.store_theta else None
        for sweep in range(1, self.sweeps + 1):
            for u in range(self.updates):
                for t in range(self.inner):
                    self._step()
                self._resample_yz()
                if self.debug:
                    self._debug_check()
                    self.states_checked += 1
            self._resample_theta_beta()
            if sweep > self.burn_in and (sweep - self.burn_in) % self.thin == 0:
                for rr in range(self.n):
                    part_v[stored, rr] = self.lam[rr]
                for l in range(self.p):
                    beta_v[stored, l] = self.beta[l]
                if self.store_theta:
                    for l in range(self.p):
                        for m in range(self.levels[l]):
                            theta_v[stored, l, m] = self.theta[l, m]
                stored += 1
            if progress is not None and progress_every > 0:
                if sweep % progress_every == 0:
                    acc = (
                        self.accepted / float(self.proposals)
                        if self.proposals else 0.0
                    )
                    progress(sweep, self.occ_count, acc)
        return {
            "partitions": partitions,
            "beta": beta_out,
            "theta": theta_out,
            "proposals": self.proposals,
            "accepted": self.accepted,
            "merges": self.merges,
            "splits": self.splits,
            "conflicts": self.conflicts,
            "exhausted": self.exhausted,
            "states_checked": self.states_checked,
        }

    def snapshot(self):
        """Final latent state as plain arrays (for the full-scale density)."""
        arr = self.arrays
        theta = [
            arr["theta"][l, : int(self.levels[l])].copy() for l in range(self.p)
        ]
        return {
            "lam": arr["lam"].copy(),
            "y": arr["yv"].copy(),
            "z": arr["z"].copy(),
            "theta": theta,
            "beta": arr["beta"].copy(),
        }


def run(problem, config, seed_seq, progress=None, progress_every=0):
    """Engine entry point: same contract as the pure Python engine."""
    from .model import LatentState, log_joint_posterior

    chain = _Chain(problem, config, seed_seq)
    out = chain.run(progress, progress_every or 0)
    snap = chain.snapshot()
    state = LatentState(
        lam=snap["lam"], y=snap["y"], z=snap["z"],
        theta=snap["theta"], beta=snap["beta"],
    )
    out["final_log_joint"] = log_joint_posterior(
        state, problem.data, problem.hyper
    )
    return out
