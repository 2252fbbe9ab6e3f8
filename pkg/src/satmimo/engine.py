"""Closed-loop, event-scheduled simulation of the precoded downlink.

One run executes the transmit pipeline against a scenario: modulate,
precode (mode dependent), counter-rotate with the live precompensation
estimates, pass the diagonal satellite chains and the LOS matrix, add
the receiver rotations and noise, and measure MER per metric window.
The sync path (reference tones plus one ADPLL per satellite) runs
continuously at its own sample rate; the data path is evaluated in
short symbol windows on a configurable cadence.  All delays are
honored through the event queue: precompensation applied at time t
uses loop state from t - rtt, CSI used at time t was delivered at or
before t.

Numerical frame: the sync loop multiplies the received tone by the
conjugate of the clean reference tone and tracks the remaining chain
rotation directly.  The residual-phase metric is invariant under this
common derotation, and it avoids carrying phase arguments of order
2*pi*f_ref*t across long runs.

Receiver model: the COTS demodulator's carrier recovery is ideal.  It
removes the user terminal's own LNB rotation (and, in uncoordinated
mode, the assigned satellite's chain rotation, since that is the
carrier such a receiver locks to).  Rotations common to one terminal's
composite signal carry no MU-MIMO information, so this models exactly
the part the hardware solves and nothing more.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelMatrix, build_channel_matrix
from .constants import QPSK_56_DECODE_THRESHOLD_DB
from .csi import CsiFeed, CsiSnapshot, average_snapshots, blue_estimate, make_pilot_book
from .impairments import ImpairmentState
from .precoding import RankDeficiencyError, passthrough, siso_baseline, zf_precoder
from .scenario import Scenario, chain_doppler
from .sync import (
    AdpllConfig,
    AdpllState,
    ResidualPhaseAccumulator,
    adpll_process,
    residual_samples_deg,
)
from .waveform import constellation_snapshot, measure_mer, random_qpsk, snr_to_rate

MODE_ALIASES = {
    "siso": "siso",
    "mimo": "mimo-precoded",
    "mimo-precoded": "mimo-precoded",
    "uncoordinated": "uncoordinated-ffr",
    "uncoordinated-ffr": "uncoordinated-ffr",
}

# Deterministic ordering of same-timestamp events
EVENT_PRIORITY = {
    "pll-block": 0,
    "pilot-slot": 1,
    "csi-delivery": 2,
    "precoder-update": 3,
    "metric-window": 4,
}

# RNG stream domains (SeedSequence entropy words)
_DOM_AWGN = 10
_DOM_SYMBOLS = 11
_DOM_PILOT_NOISE = 12
_DOM_SYNC_NOISE = 13
_DOM_ACQUISITION = 14


class SimulationAbort(RuntimeError):
    """Run could not proceed; the message is the diagnostic."""


@dataclass(frozen=True)
class Event:
    time_s: float
    kind: str
    payload: dict = field(default_factory=dict)


class EventQueue:
    """Time-ordered queue with fixed priorities for equal timestamps."""

    def __init__(self):
        self._heap = []
        self._seq = 0
        self._last_popped = -math.inf

    def push(self, event: Event) -> None:
        if event.kind not in EVENT_PRIORITY:
            raise ValueError(f"unknown event kind {event.kind!r}")
        heapq.heappush(
            self._heap, (event.time_s, EVENT_PRIORITY[event.kind], self._seq, event)
        )
        self._seq += 1

    def pop(self) -> Event:
        time_s, _, _, event = heapq.heappop(self._heap)
        # causality: simulation time never moves backwards
        assert time_s >= self._last_popped - 1e-12
        self._last_popped = time_s
        return event

    def __len__(self) -> int:
        return len(self._heap)


def schedule_delays(event: Event, propagation_s: float, rtt_s: float) -> Event:
    """Attach the state-access timestamps implied by the loop delays."""
    if propagation_s < 0 or rtt_s < 0:
        raise ValueError("delays must be >= 0")
    payload = dict(event.payload)
    payload["comp_state_time_s"] = event.time_s - rtt_s
    payload["transmit_time_s"] = event.time_s - propagation_s
    return Event(time_s=event.time_s, kind=event.kind, payload=payload)


@dataclass
class LinkBudget:
    """Per-UT CNR targets and the row normalization that realizes them.

    Channel rows are scaled to unit magnitude towards the reference
    satellite and each terminal's noise variance is set to 1/CNR, so
    SISO reception from the reference satellite hits the configured CNR
    exactly.  The same scaling is frozen for all modes.
    """

    cnr_db: tuple | None = (16.5, 10.9)
    sync_cnr_db: float | None = 30.0
    reference_satellite: int = 0

    def normalize(self, h: np.ndarray) -> np.ndarray:
        ref = np.abs(h[:, self.reference_satellite])
        if np.any(ref == 0):
            raise ValueError("reference-satellite gains must be nonzero")
        return h / ref[:, None]

    def noise_variances(self, n_users: int) -> np.ndarray:
        if self.cnr_db is None:
            return np.zeros(n_users)
        if len(self.cnr_db) != n_users:
            raise ValueError("one CNR per user terminal required")
        return 10.0 ** (-np.asarray(self.cnr_db, dtype=float) / 10.0)


@dataclass
class WindowRecord:
    t_s: float
    mer_db: list          # per UT, against its assigned stream
    mer_all_db: list      # per UT x per stream
    decoded_stream: list  # per UT argmax stream
    decode_ok: list       # per UT
    stable: bool
    precoder_mode: str


@dataclass
class MetricsReport:
    """Aggregated per-run metrics; serializable via to_json_dict."""

    mode: str
    duration_s: float
    seed: int
    scenario_name: str
    mer_db: list
    mer_mean_db: list
    per_user_rate: list
    sum_rate: float
    decode_ok: list
    decoded_stream: list
    lock_time_s: list
    residual: dict | None
    windows: list
    diagnostics: list
    pll_timeline: dict
    offsets_timeline: dict
    constellations: dict
    assigned_streams: list
    n_stable_windows: int
    residual_t0_s: float | None = None
    residual_stride_s: float | None = None
    csi_snapshots: list = field(default_factory=list)
    precoder_log: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "scenario_name": self.scenario_name,
            "mer_db": self.mer_db,
            "mer_mean_db": self.mer_mean_db,
            "per_user_rate_bit_s_hz": self.per_user_rate,
            "sum_rate_bit_s_hz": self.sum_rate,
            "decode_ok": self.decode_ok,
            "decoded_stream": self.decoded_stream,
            "assigned_streams": self.assigned_streams,
            "lock_time_s": self.lock_time_s,
            "residual_phase": self.residual.to_json_dict() if self.residual else None,
            "n_stable_windows": self.n_stable_windows,
            "diagnostics": self.diagnostics,
            "precoder_log": self.precoder_log,
        }


def _rng(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))


class _RunState:
    """Mutable per-run state shared by the event handlers."""

    def __init__(self):
        self.comp_history = []        # per sat: list of (t, nco_phase, freq_hz)
        self.pll_blocks = []          # per sat: list of (out, freq) recent blocks
        self.ref_blocks = []          # per sat: list of received tone blocks
        self.lock_time = []           # per sat: first lock time or None
        self.precoder = None
        self.precoder_mode = "siso-baseline"
        self.t_first_zf = None
        self.pending_slots = {}       # ut -> list of CsiSnapshot (current period)
        self.csi_log = []             # delivered snapshots, in delivery order
        self.precoder_log = []        # precoder updates with their source CSI
        self.windows = []
        self.diagnostics = []
        self.constellations = {}
        self.pll_timeline = {"t_s": [], "est_offset_hz": [], "true_offset_hz": []}
        self.offsets_timeline = {"t_s": [], "offsets_hz": []}


class SimulationRunner:
    """Builds and executes one run; use engine.run() for the functional API."""

    def __init__(self, scenario: Scenario, mode: str, duration_s: float | None = None):
        if mode not in MODE_ALIASES:
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = MODE_ALIASES[mode]
        errors = scenario.validate(mimo=self.mode == "mimo-precoded")
        if errors:
            raise ValueError("invalid scenario: " + "; ".join(errors))
        self.scenario = scenario
        self.duration = float(duration_s if duration_s is not None else scenario.duration_s)
        timing = scenario.timing
        if self.mode == "mimo-precoded":
            min_dur = timing.csi_update_period_s + timing.csi_latency_s
            if self.duration < min_dur:
                raise ValueError(
                    f"mimo mode needs duration >= one CSI period (+latency) = {min_dur} s"
                )
        self.timing = timing
        self.fs = timing.sync_sample_rate_hz
        self.n_block = int(round(timing.sync_block_s * self.fs))
        self.n_sat = scenario.n_satellites
        self.n_ut = scenario.n_users
        self.uses_comp = self.mode in ("siso", "mimo-precoded")

        self.budget = LinkBudget(
            cnr_db=scenario.link.cnr_db,
            sync_cnr_db=scenario.link.sync_cnr_db,
            reference_satellite=scenario.link.reference_satellite,
        )
        h_geo = build_channel_matrix(scenario, 0.0)
        self.h_used = self.budget.normalize(h_geo.entries)
        self.sigma2 = self.budget.noise_variances(self.n_ut)

        self.impairments = self._build_impairments()
        self.pilot_book = make_pilot_book(self.n_sat, timing.pilot_length)
        self.csi_feed = CsiFeed()

        # dense 1 ms grid of per-satellite chain phase (Doppler + converter)
        # and the common gateway phase; sample-level values interpolate this
        self._grid_step = 1e-3
        margin = 2.0 * timing.sync_block_s
        self._grid = np.arange(0.0, self.duration + margin + self._grid_step, self._grid_step)
        self._chain_phase_grid = []
        self._doppler_grid = []
        for n in range(self.n_sat):
            nu = np.asarray(chain_doppler(scenario, n, self._grid), dtype=float)
            cycles = np.concatenate(
                ([0.0], np.cumsum(0.5 * (nu[1:] + nu[:-1]) * np.diff(self._grid)))
            )
            conv = self.impairments.converters[n].phase_at(self._grid)
            self._chain_phase_grid.append(2.0 * np.pi * cycles + conv)
            self._doppler_grid.append(nu)
        self._gw_phase_grid = self.impairments.gateway.phase_at(self._grid)

        self.plls = []
        acq_rng = _rng(scenario.seed, _DOM_ACQUISITION)
        for n in range(self.n_sat):
            f0 = self.impairments.converters[n].static_offset_hz + float(
                chain_doppler(scenario, n, 0.0)
            )
            err = acq_rng.uniform(-timing.pll_acquisition_error_hz,
                                  timing.pll_acquisition_error_hz)
            cfg = AdpllConfig(
                sample_rate_hz=self.fs,
                loop_bandwidth_hz=timing.pll_loop_bandwidth_hz,
                damping=timing.pll_damping,
                nco_initial_freq_hz=-(f0 + err),
            )
            self.plls.append(AdpllState(config=cfg))
        self._sync_rngs = [_rng(scenario.seed, _DOM_SYNC_NOISE, n) for n in range(self.n_sat)]

        # residual-phase bookkeeping
        self.tau = timing.rtt_s
        self.m_delay = int(round(self.tau * self.fs))
        self.m_blocks = self.m_delay // self.n_block
        self.residual_acc = ResidualPhaseAccumulator(
            decimate_stride=max(1, self.m_delay)
        )
        self.residual_start = None

        self.n_win_symbols = int(round(timing.metric_window_s * scenario.carriers.symbol_rate_baud))
        self.assigned_streams = self._assigned_streams()

    def _build_impairments(self) -> ImpairmentState:
        cfg = self.scenario.impairments
        from .impairments import ImpairmentConfig, OscillatorParams

        conv = list(cfg.converters) or [OscillatorParams() for _ in range(self.n_sat)]
        lnbs = list(cfg.lnbs) or [OscillatorParams() for _ in range(self.n_ut)]
        filled = ImpairmentConfig(
            converters=conv, lnbs=lnbs,
            gateway_phase_noise_linewidth_hz=cfg.gateway_phase_noise_linewidth_hz,
        )
        return ImpairmentState.from_config(filled, self.scenario.seed)

    def _assigned_streams(self) -> list:
        if self.mode == "siso":
            return [0] * self.n_ut
        return list(range(self.n_ut))

    # ---- chain phase helpers -------------------------------------------------

    def _chain_phase(self, sat: int, t) -> np.ndarray:
        return np.interp(t, self._grid, self._chain_phase_grid[sat])

    def _gw_phase(self, t) -> np.ndarray:
        return np.interp(t, self._grid, self._gw_phase_grid)

    def _true_offset(self, sat: int, t: float) -> float:
        nu = float(np.interp(t, self._grid, self._doppler_grid[sat]))
        return nu + float(self.impairments.converters[sat].offset_at(t))

    def _comp_phase(self, sat: int, t, state_cutoff: float):
        """Compensation phase at times t from loop state at or before the cutoff.

        Returns None while no sufficiently old loop state exists.  The
        compensation NCO free-runs from the stale estimate, so the phase
        extrapolates linearly at the estimated frequency.
        """
        hist = self.state.comp_history[sat]
        idx = None
        for i in range(len(hist) - 1, -1, -1):
            if hist[i][0] <= state_cutoff + 1e-9:
                idx = i
                break
        if idx is None:
            return None
        t_b, phase_b, freq_b = hist[idx]
        assert t_b <= state_cutoff + 1e-9  # causality
        return -(phase_b + 2.0 * np.pi * freq_b * (np.asarray(t) - t_b))

    # ---- event handlers ------------------------------------------------------

    def _handle_pll_block(self, event: Event) -> None:
        t_end = event.time_s
        i0 = int(round((t_end - self.timing.sync_block_s) * self.fs))
        t_grid = (i0 + np.arange(self.n_block)) / self.fs
        for n in range(self.n_sat):
            # received tone in the reference-relative frame
            phase = -(self._chain_phase(n, t_grid) + self._gw_phase(t_grid))
            rx = np.exp(1j * phase)
            if self.budget.sync_cnr_db is not None:
                sigma2 = 10.0 ** (-self.budget.sync_cnr_db / 10.0)
                noise = self._sync_rngs[n].standard_normal(2 * self.n_block)
                rx = rx + np.sqrt(sigma2 / 2.0) * (noise[::2] + 1j * noise[1::2])
            out, freq = adpll_process(self.plls[n], rx)
            self.state.pll_blocks[n].append((out, freq))
            if len(self.state.pll_blocks[n]) > self.m_blocks + 2:
                self.state.pll_blocks[n].pop(0)
            self.state.ref_blocks[n].append(rx)
            if len(self.state.ref_blocks[n]) > 1:
                self.state.ref_blocks[n].pop(0)
            self.state.comp_history[n].append(
                (t_end, self.plls[n].nco_phase, self.plls[n].nco_freq_hz)
            )
            if self.state.lock_time[n] is None and self.plls[n].locked:
                self.state.lock_time[n] = t_end
        self.state.pll_timeline["t_s"].append(t_end)
        self.state.pll_timeline["est_offset_hz"].append(
            [-self.plls[n].nco_freq_hz for n in range(self.n_sat)]
        )
        self.state.pll_timeline["true_offset_hz"].append(
            [self._true_offset(n, t_end) for n in range(self.n_sat)]
        )
        self._accumulate_residual(t_end, t_grid)
        if (
            self.uses_comp
            and t_end >= self.timing.warmup_s
            and any(lt is None for lt in self.state.lock_time)
        ):
            unlocked = [n for n, lt in enumerate(self.state.lock_time) if lt is None]
            raise SimulationAbort(
                f"PLL(s) {unlocked} failed to lock within warmup of {self.timing.warmup_s} s"
            )

    def _accumulate_residual(self, t_end: float, t_grid: np.ndarray) -> None:
        if self.n_sat < 2:
            return
        if self.residual_start is None:
            if all(lt is not None for lt in self.state.lock_time):
                self.residual_start = max(lt for lt in self.state.lock_time) + self.tau + 1.0
            return
        if t_grid[0] < self.residual_start:
            return
        blocks_kept = len(self.state.pll_blocks[0])
        if blocks_kept < self.m_blocks + 2:
            return
        r = self.m_delay - self.m_blocks * self.n_block
        comps = []
        refs = []
        for n in range(self.n_sat):
            older = self.state.pll_blocks[n][blocks_kept - self.m_blocks - 2]
            newer = self.state.pll_blocks[n][blocks_kept - self.m_blocks - 1]
            out = np.concatenate((older[0], newer[0]))[self.n_block - r: 2 * self.n_block - r]
            freq = np.concatenate((older[1], newer[1]))[self.n_block - r: 2 * self.n_block - r]
            comps.append(out * np.exp(2j * np.pi * freq * self.tau))
            refs.append(self.state.ref_blocks[n][-1])
        deg = residual_samples_deg(comps[0], refs[0], comps[1], refs[1])
        self.residual_acc.add(deg)

    def _handle_pilot_slot(self, event: Event) -> None:
        if self.mode == "uncoordinated-ffr":
            return
        t_s = event.time_s
        if not all(self.plls[n].locked for n in range(self.n_sat)):
            return
        # chain rotation held at the slot midpoint; residual drift over one
        # 10 ms slot is far below the estimator noise floor
        slot_len = self.pilot_book.length / self.fs
        net = self._net_rotation(np.array([t_s - slot_len / 2.0]),
                                 event.payload["comp_state_time_s"])
        if net is None:
            return
        rows = []
        for k in range(self.n_ut):
            clean = (self.h_used[k] * net[:, 0]) @ self.pilot_book.sequences
            rng = _rng(self.scenario.seed, _DOM_PILOT_NOISE, k, event.payload["slot_index"])
            if self.sigma2[k] > 0:
                noise = rng.standard_normal(2 * self.pilot_book.length)
                clean = clean + np.sqrt(self.sigma2[k] / 2.0) * (noise[::2] + 1j * noise[1::2])
            h_row, _ = blue_estimate(clean, self.pilot_book, self.sigma2[k])
            rows.append(h_row)
        for k in range(self.n_ut):
            snap = CsiSnapshot(
                h_est=ChannelMatrix(
                    entries=rows[k][None, :],
                    carrier_freq_hz=self.scenario.carriers.downlink_freq_hz,
                    timestamp_s=t_s,
                    source="estimated",
                ),
                measurement_times=(t_s,),
                ut_id=self.scenario.user_terminals[k].id,
            )
            self.state.pending_slots.setdefault(k, []).append(snap)

    def _handle_period_end(self, event: Event, queue: EventQueue) -> None:
        """Average the period's measurements and schedule the delivery."""
        delivered_any = False
        for k in range(self.n_ut):
            slots = self.state.pending_slots.pop(k, [])
            if not slots:
                continue
            avg = average_snapshots(slots)
            # the feedback message leaves once the period completes, even
            # if the period's last slot was skipped
            t_del = max(avg.measurement_end, event.time_s) + self.timing.csi_latency_s
            queue.push(Event(t_del, "csi-delivery", {"ut": k, "snapshot": avg}))
            delivered_any = True
        if delivered_any:
            t_del = event.time_s + self.timing.csi_latency_s
            queue.push(Event(t_del, "precoder-update", {}))

    def _handle_csi_delivery(self, event: Event) -> None:
        self.csi_feed.deliver(event.payload["ut"], event.time_s, event.payload["snapshot"])
        self.state.csi_log.append(event.payload["snapshot"])

    def _handle_precoder_update(self, event: Event) -> None:
        if self.mode != "mimo-precoded":
            return
        snaps = []
        for k in range(self.n_ut):
            snap = self.csi_feed.latest(k, event.time_s)
            if snap is None:
                return
            snaps.append(snap)
        h_est = np.stack([s.h_est.entries[0] for s in snaps])
        try:
            self.state.precoder = zf_precoder(h_est)
            self.state.precoder_mode = "zf"
            if self.state.t_first_zf is None:
                self.state.t_first_zf = event.time_s
            self.state.precoder_log.append({
                "t_s": event.time_s,
                "precoder": self.state.precoder.to_json_dict(),
                "csi": [s.to_json_dict() for s in snaps],
            })
        except RankDeficiencyError as exc:
            self.state.diagnostics.append(
                f"t={event.time_s:.3f}: rank-deficient CSI, keeping previous precoder ({exc})"
            )

    def _net_rotation(self, t, state_cutoff: float):
        """Per-satellite unit rotation: compensation times actual chain."""
        t = np.asarray(t, dtype=float)
        rot = np.empty((self.n_sat, len(t)), dtype=complex)
        for n in range(self.n_sat):
            chain = self._chain_phase(n, t) + self._gw_phase(t)
            if self.uses_comp:
                comp = self._comp_phase(n, t, state_cutoff)
                if comp is None:
                    return None
                rot[n] = np.exp(1j * (comp - chain))
            else:
                rot[n] = np.exp(-1j * chain)
        return rot

    def _handle_metric_window(self, event: Event) -> None:
        t0 = event.time_s
        w_idx = event.payload["window_index"]
        if self.uses_comp and not all(p.locked for p in self.plls):
            return
        n_sym = self.n_win_symbols
        t_sym = t0 + np.arange(n_sym) / self.scenario.carriers.symbol_rate_baud
        net = self._net_rotation(t_sym, event.payload["comp_state_time_s"])
        if net is None:
            return
        precoder = self.state.precoder
        streams = [random_qpsk(n_sym, _rng(self.scenario.seed, _DOM_SYMBOLS, j, w_idx)).symbols
                   for j in range(self.n_ut)]
        d = np.stack(streams)
        x = precoder.entries @ d
        x = x * net
        y = self.h_used @ x
        # receiver-side LNB rotation and its ideal recovery
        lnb_phase = np.stack(
            [self.impairments.lnbs[k].phase_at(t_sym) for k in range(self.n_ut)]
        )
        r_rot = np.exp(-1j * lnb_phase)
        y = y * r_rot
        recovered = y * np.conj(r_rot)
        if self.mode == "uncoordinated-ffr":
            recovered = recovered * np.conj(net[: self.n_ut])
        mers = np.empty((self.n_ut, self.n_ut))
        rx_final = np.empty_like(recovered)
        for k in range(self.n_ut):
            rng = _rng(self.scenario.seed, _DOM_AWGN, k, w_idx)
            rx = recovered[k]
            if self.sigma2[k] > 0:
                noise = rng.standard_normal(2 * n_sym)
                rx = rx + np.sqrt(self.sigma2[k] / 2.0) * (noise[::2] + 1j * noise[1::2])
            rx_final[k] = rx
            for j in range(self.n_ut):
                mers[k, j] = measure_mer(rx, d[j]).mer_db
        decoded = mers.argmax(axis=1)
        assigned = self.assigned_streams
        record = WindowRecord(
            t_s=t0,
            mer_db=[float(mers[k, assigned[k]]) for k in range(self.n_ut)],
            mer_all_db=mers.tolist(),
            decoded_stream=[int(j) for j in decoded],
            decode_ok=[bool(mers[k, decoded[k]] >= QPSK_56_DECODE_THRESHOLD_DB)
                       for k in range(self.n_ut)],
            stable=self._window_stable(t0),
            precoder_mode=self.state.precoder_mode,
        )
        self.state.windows.append(record)
        if record.stable and not self.state.constellations:
            for k in range(self.n_ut):
                g = np.vdot(d[assigned[k]], rx_final[k]) / np.vdot(
                    d[assigned[k]], d[assigned[k]]
                )
                self.state.constellations[k] = constellation_snapshot(rx_final[k] / g)

    def _window_stable(self, t0: float) -> bool:
        if self.mode == "uncoordinated-ffr":
            return True
        if any(lt is None for lt in self.state.lock_time):
            return False
        settled = max(lt for lt in self.state.lock_time) + 1.0
        if self.mode == "mimo-precoded":
            if self.state.t_first_zf is None:
                return False
            settled = max(settled, self.state.t_first_zf + self.timing.metric_period_s)
        return t0 >= settled

    # ---- main loop -----------------------------------------------------------

    def run(self) -> MetricsReport:
        if getattr(self, "_consumed", False):
            raise RuntimeError("a SimulationRunner executes once; build a new one")
        self._consumed = True
        self.state = _RunState()
        self.state.comp_history = [[] for _ in range(self.n_sat)]
        self.state.pll_blocks = [[] for _ in range(self.n_sat)]
        self.state.ref_blocks = [[] for _ in range(self.n_sat)]
        self.state.lock_time = [None] * self.n_sat
        if self.mode == "mimo-precoded":
            self.state.precoder = siso_baseline(self.n_sat, self.n_ut, 0, 0)
            self.state.precoder_mode = "siso-baseline"
        elif self.mode == "siso":
            self.state.precoder = siso_baseline(self.n_sat, self.n_ut, 0, 0)
            self.state.precoder_mode = "siso-baseline"
        else:
            self.state.precoder = passthrough(self.n_sat, self.n_ut)
            self.state.precoder_mode = "passthrough"

        queue = EventQueue()
        n_blocks = int(math.floor(self.duration / self.timing.sync_block_s + 1e-9))
        for b in range(1, n_blocks + 1):
            queue.push(Event(b * self.timing.sync_block_s, "pll-block", {}))
        slot_period = self.timing.csi_update_period_s / self.timing.n_csi_average
        slot_index = 1
        t = slot_period
        while t <= self.duration + 1e-9:
            ev = Event(t, "pilot-slot", {"slot_index": slot_index,
                                         "period_end": slot_index % self.timing.n_csi_average == 0})
            queue.push(schedule_delays(ev, self.timing.propagation_s, self.timing.rtt_s))
            slot_index += 1
            t = slot_index * slot_period
        w_idx = 1
        t = self.timing.metric_period_s
        while t + self.timing.metric_window_s <= self.duration + 1e-9:
            ev = Event(t, "metric-window", {"window_index": w_idx})
            queue.push(schedule_delays(ev, self.timing.propagation_s, self.timing.rtt_s))
            w_idx += 1
            t = w_idx * self.timing.metric_period_s

        while len(queue):
            event = queue.pop()
            if event.kind == "pll-block":
                self._handle_pll_block(event)
            elif event.kind == "pilot-slot":
                self._handle_pilot_slot(event)
                if event.payload.get("period_end"):
                    self._handle_period_end(event, queue)
            elif event.kind == "csi-delivery":
                self._handle_csi_delivery(event)
            elif event.kind == "precoder-update":
                self._handle_precoder_update(event)
            elif event.kind == "metric-window":
                self._handle_metric_window(event)

        return self._build_report()

    def _build_report(self) -> MetricsReport:
        stable = [w for w in self.state.windows if w.stable]
        if self.uses_comp and not stable:
            raise SimulationAbort(
                "no stable metric windows were produced; increase the duration"
            )
        if stable:
            mer = [float(np.median([w.mer_db[k] for w in stable])) for k in range(self.n_ut)]
            mer_mean = [float(np.mean([w.mer_db[k] for w in stable])) for k in range(self.n_ut)]
            decode_ok = [bool(np.all([w.decode_ok[k] for w in stable])) for k in range(self.n_ut)]
            decoded = [int(np.median([w.decoded_stream[k] for w in stable]))
                       for k in range(self.n_ut)]
        else:
            mer = mer_mean = [float("nan")] * self.n_ut
            decode_ok = [False] * self.n_ut
            decoded = [-1] * self.n_ut
        rates = [snr_to_rate(m) if np.isfinite(m) else 0.0 for m in mer]
        residual = None
        if self.residual_acc._n > 0:
            residual = self.residual_acc.finalize()
        offsets = self._offsets_timeline()
        return MetricsReport(
            mode=self.mode,
            duration_s=self.duration,
            seed=self.scenario.seed,
            scenario_name=self.scenario.name,
            mer_db=mer,
            mer_mean_db=mer_mean,
            per_user_rate=rates,
            sum_rate=float(sum(rates)),
            decode_ok=decode_ok,
            decoded_stream=decoded,
            lock_time_s=list(self.state.lock_time),
            residual=residual,
            windows=self.state.windows,
            diagnostics=self.state.diagnostics,
            pll_timeline=self.state.pll_timeline,
            offsets_timeline=offsets,
            constellations=self.state.constellations,
            assigned_streams=self.assigned_streams,
            n_stable_windows=len(stable),
            residual_t0_s=self.residual_start,
            residual_stride_s=self.residual_acc.stride / self.fs,
            csi_snapshots=list(self.state.csi_log),
            precoder_log=list(self.state.precoder_log),
        )

    def _offsets_timeline(self) -> dict:
        step = max(self.timing.metric_period_s, 0.1)
        ts = np.arange(0.0, self.duration + 1e-9, step)
        cols = {}
        for n in range(self.n_sat):
            cols[f"f_con{n + 1}_hz"] = [
                float(self.impairments.converters[n].offset_at(t)) for t in ts
            ]
        for k in range(self.n_ut):
            cols[f"f_lnb{k + 1}_hz"] = [
                float(self.impairments.lnbs[k].offset_at(t)) for t in ts
            ]
        return {"t_s": ts.tolist(), **cols}


def run(scenario: Scenario, mode: str, duration_s: float | None = None) -> MetricsReport:
    """Execute one closed-loop run and return its metrics."""
    return SimulationRunner(scenario, mode, duration_s).run()


@dataclass
class ModeComparison:
    mer_delta_db: list
    rate_ratio: float
    siso_reference_rate: float
    mimo_sum_rate: float
    decode_transitions: list

    def to_json_dict(self) -> dict:
        return {
            "mer_delta_db": self.mer_delta_db,
            "rate_ratio": self.rate_ratio,
            "siso_reference_rate_bit_s_hz": self.siso_reference_rate,
            "mimo_sum_rate_bit_s_hz": self.mimo_sum_rate,
            "decode_transitions": self.decode_transitions,
        }


def compare_modes(report_siso: MetricsReport, report_mimo: MetricsReport) -> ModeComparison:
    """SISO-vs-MIMO summary: per-UT MER deltas and the sum-rate ratio.

    The reference rate is the best single-user SISO rate; both reports
    must come from the same scenario and seed.
    """
    if report_siso.seed != report_mimo.seed or (
        report_siso.scenario_name != report_mimo.scenario_name
    ):
        raise ValueError("reports come from different scenarios or seeds")
    deltas = [m - s for s, m in zip(report_siso.mer_db, report_mimo.mer_db)]
    r_siso = max(report_siso.per_user_rate)
    ratio = report_mimo.sum_rate / r_siso if r_siso > 0 else float("inf")
    transitions = [
        {"ut": k, "from_stream": report_siso.decoded_stream[k],
         "to_stream": report_mimo.decoded_stream[k]}
        for k in range(len(report_siso.decoded_stream))
    ]
    return ModeComparison(
        mer_delta_db=[float(d) for d in deltas],
        rate_ratio=float(ratio),
        siso_reference_rate=float(r_siso),
        mimo_sum_rate=float(report_mimo.sum_rate),
        decode_transitions=transitions,
    )
