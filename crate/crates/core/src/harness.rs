//! Monte-Carlo BER engine.
//!
//! Every frame runs from its own seed, derived from the master seed, the
//! frame index and the sweep-point index. Frames are processed in fixed-size
//! batches on a rayon pool, and the stopping rule is applied in frame order
//! after each batch, so results do not depend on the number of workers.
//!
//! Both simulated receivers see the same frame: the same BS1 data, the same
//! interferer traffic, channel draw and noise. They differ only in what BS2
//! sends (the swapped repetition, or its own independent symbols).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::{ber_closed_form, AnalyticParams};
use crate::canceler::{detect_uncoordinated, PairDetector, ReplicaTable};
use crate::channel::{
    apply_channel, draw_realization, noise_grid, noise_variance, ChannelModel, ChannelRealization, FadingKind,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_ls, estimate_perfect, ChannelEstimate, CsiMode};
use crate::modem::{build_frames, uncoordinated_grids, FrameConfig, FrameGrid, QpskSymbol};
use crate::N_BS;

pub const MODULATION_ORDER: u32 = 4;

/// Frames dispatched between two evaluations of the stopping rule.
pub const BATCH_FRAMES: u64 = 32;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Receiver variants reported by a sweep. Declaration order is the CSV
/// row order within one swept value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReceiverMode {
    /// Closed-form BER of the uncoordinated system without cancellation.
    Analytic,
    /// Joint-ML canceler without coordination (BS2 sends its own data).
    Baseline,
    /// Coordinated repetition, joint-ML canceler and weighted combining.
    Proposed,
}

impl ReceiverMode {
    pub const ALL: [ReceiverMode; 3] = [ReceiverMode::Analytic, ReceiverMode::Baseline, ReceiverMode::Proposed];

    pub fn as_str(self) -> &'static str {
        match self {
            ReceiverMode::Analytic => "analytic",
            ReceiverMode::Baseline => "baseline",
            ReceiverMode::Proposed => "proposed",
        }
    }

    pub fn is_simulated(self) -> bool {
        self != ReceiverMode::Analytic
    }
}

impl fmt::Display for ReceiverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReceiverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(ReceiverMode::Analytic),
            "baseline" => Ok(ReceiverMode::Baseline),
            "proposed" => Ok(ReceiverMode::Proposed),
            other => Err(Error::Config(format!("unknown receiver mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Sir13,
    Ebno,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Sir13 => "sir13",
            SweepAxis::Ebno => "ebno",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoppingRule {
    pub min_errors: u64,
    pub max_frames: u64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule { min_errors: 100, max_frames: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub n_cells: usize,
    /// Mobile speed. Recorded only; the channel is block fading per frame.
    pub speed_kmh: f64,
    pub frame: FrameConfig,
    pub channel: FadingKind,
    pub pdp_decay: f64,
    pub sir12_db: f64,
    pub sir13_db: f64,
    pub ebno_db: f64,
    pub csi: CsiMode,
    pub modes: Vec<ReceiverMode>,
    pub master_seed: u64,
    pub stopping: StoppingRule,
    /// Worker threads; 0 lets rayon pick.
    pub workers: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            carrier_freq_hz: 2.0e9,
            bandwidth_hz: 20.0e6,
            n_cells: N_BS,
            speed_kmh: 10.0,
            frame: FrameConfig::default(),
            channel: FadingKind::Flat,
            pdp_decay: crate::channel::DEFAULT_PDP_DECAY,
            sir12_db: 0.0,
            sir13_db: 10.0,
            ebno_db: 18.0,
            csi: CsiMode::Perfect,
            modes: ReceiverMode::ALL.to_vec(),
            master_seed: 0,
            stopping: StoppingRule::default(),
            workers: 0,
        }
    }
}

impl SimConfig {
    pub fn channel_model(&self) -> Result<ChannelModel> {
        let model = ChannelModel::from_kind(self.channel, self.pdp_decay)?;
        model.check_prefix(self.frame.cp_len())?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells != N_BS {
            return Err(Error::Config(format!("only {N_BS} cells are supported, got {}", self.n_cells)));
        }
        self.channel_model()?;
        for (name, v) in [("sir12", self.sir12_db), ("sir13", self.sir13_db), ("ebno", self.ebno_db)] {
            if v.is_nan() || v == f64::NEG_INFINITY {
                return Err(Error::Config(format!("{name} must be a number above -inf dB, got {v}")));
            }
        }
        if self.modes.is_empty() {
            return Err(Error::Config("no receiver modes selected".into()));
        }
        Ok(())
    }

    /// Maximum Doppler shift implied by the configured speed and carrier.
    pub fn doppler_hz(&self) -> f64 {
        self.speed_kmh / 3.6 * self.carrier_freq_hz / SPEED_OF_LIGHT
    }

    pub fn noise_variance(&self) -> Result<f64> {
        noise_variance(self.ebno_db, MODULATION_ORDER)
    }

    /// Copy with the swept parameter set to `value_db`.
    pub fn at(&self, axis: SweepAxis, value_db: f64) -> SimConfig {
        let mut cfg = self.clone();
        match axis {
            SweepAxis::Sir13 => cfg.sir13_db = value_db,
            SweepAxis::Ebno => cfg.ebno_db = value_db,
        }
        cfg
    }

    fn wants(&self, mode: ReceiverMode) -> bool {
        self.modes.contains(&mode)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one frame. Each stage is a bijection of the running state, so for
/// a fixed master seed and point index distinct frames never collide.
pub fn derive_frame_seed(master_seed: u64, frame_index: u64, point_index: u64) -> u64 {
    let s = splitmix64(master_seed);
    let s = splitmix64(s ^ frame_index);
    splitmix64(s ^ point_index.rotate_left(32) ^ 0x5851_F42D_4C95_7F2D)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ErrorCount {
    pub bits: u64,
    pub errors: u64,
}

impl ErrorCount {
    fn from_flags(flags: &[bool]) -> Self {
        ErrorCount { bits: flags.len() as u64, errors: flags.iter().filter(|&&e| e).count() as u64 }
    }
}

/// Per-bit error flags of one frame, ordered like the frame's data bits.
/// A mode is `None` when it was not requested.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutcome {
    pub proposed: Option<Vec<bool>>,
    pub baseline: Option<Vec<bool>>,
    /// Pairs where every cooperating gain estimate was zero.
    pub fallbacks: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FrameCounts {
    pub proposed: Option<ErrorCount>,
    pub baseline: Option<ErrorCount>,
}

impl FrameCounts {
    pub fn get(&self, mode: ReceiverMode) -> Option<ErrorCount> {
        match mode {
            ReceiverMode::Proposed => self.proposed,
            ReceiverMode::Baseline => self.baseline,
            ReceiverMode::Analytic => None,
        }
    }
}

fn estimate(csi: CsiMode, real: &ChannelRealization, rx: &FrameGrid, frame: &FrameConfig) -> Result<ChannelEstimate> {
    match csi {
        CsiMode::Perfect => Ok(estimate_perfect(real)),
        CsiMode::Ls => estimate_ls(rx, frame),
    }
}

fn add_grid(dst: &mut FrameGrid, src: &FrameGrid) {
    for (d, s) in dst.cells_mut().iter_mut().zip(src.cells()) {
        *d += s;
    }
}

fn push_bit_errors(out: &mut Vec<bool>, got: QpskSymbol, want: QpskSymbol) {
    let (g0, g1) = got.bits();
    let (w0, w1) = want.bits();
    out.push(g0 != w0);
    out.push(g1 != w1);
}

/// Runs one frame through transmitter, channel, estimator and the requested
/// receivers.
///
/// Random draws happen in a fixed order (data bits, interferer traffic,
/// BS2's uncoordinated traffic, channel, noise) whatever modes are active.
pub fn simulate_frame(cfg: &SimConfig, seed: u64) -> Result<FrameOutcome> {
    let frame = &cfg.frame;
    let model = cfg.channel_model()?;
    let sigma2 = cfg.noise_variance()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let bits: Vec<u8> = (0..frame.bits_per_frame()).map(|_| u8::from(rng.random::<bool>())).collect();
    let tx = build_frames(&bits, frame, &mut rng)?;
    let uncoordinated = uncoordinated_grids(&tx, frame, &mut rng);
    let real = draw_realization(&model, (cfg.sir12_db, cfg.sir13_db), frame.n_fft(), &mut rng);
    let noise = noise_grid(frame.n_fft(), frame.n_symbols(), sigma2, &mut rng);

    let n_pairs = frame.pairs().len();
    let mut fallbacks = 0;

    let proposed = if cfg.wants(ReceiverMode::Proposed) {
        let mut rx = apply_channel(&tx.grids, &real)?;
        add_grid(&mut rx, &noise);
        let est = estimate(cfg.csi, &real, &rx, frame)?;
        let detectors: Vec<PairDetector> =
            frame.pairs().iter().map(|&(a, b)| PairDetector::new(&est.at(a), &est.at(b))).collect();

        let mut errors = Vec::with_capacity(bits.len());
        for (d, &sym) in frame.data_symbols().iter().enumerate() {
            for (k, det) in detectors.iter().enumerate() {
                let truth = &tx.pairs[d * n_pairs + k];
                let out = det.detect(rx.get(sym, truth.f_a), rx.get(sym, truth.f_b));
                fallbacks += usize::from(out.is_fallback());
                push_bit_errors(&mut errors, out.s_p, truth.s_p);
                push_bit_errors(&mut errors, out.s_q, truth.s_q);
            }
        }
        Some(errors)
    } else {
        None
    };

    let baseline = if cfg.wants(ReceiverMode::Baseline) {
        let mut rx = apply_channel(&uncoordinated, &real)?;
        add_grid(&mut rx, &noise);
        let est = estimate(cfg.csi, &real, &rx, frame)?;
        let tables: Vec<ReplicaTable> = (0..frame.n_fft()).map(|l| ReplicaTable::new(&est.at(l))).collect();

        let mut errors = Vec::with_capacity(bits.len());
        for (d, &sym) in frame.data_symbols().iter().enumerate() {
            for truth in &tx.pairs[d * n_pairs..(d + 1) * n_pairs] {
                let got_p = detect_uncoordinated(&tables[truth.f_a], rx.get(sym, truth.f_a));
                let got_q = detect_uncoordinated(&tables[truth.f_b], rx.get(sym, truth.f_b));
                push_bit_errors(&mut errors, got_p, truth.s_p);
                push_bit_errors(&mut errors, got_q, truth.s_q);
            }
        }
        Some(errors)
    } else {
        None
    };

    Ok(FrameOutcome { proposed, baseline, fallbacks })
}

/// Bit and error counts of one frame per requested simulated mode.
pub fn run_frame(cfg: &SimConfig, seed: u64) -> Result<FrameCounts> {
    let out = simulate_frame(cfg, seed)?;
    Ok(FrameCounts {
        proposed: out.proposed.as_deref().map(ErrorCount::from_flags),
        baseline: out.baseline.as_deref().map(ErrorCount::from_flags),
    })
}

/// One measured (or evaluated) point of a BER curve.
#[derive(Clone, Debug, PartialEq)]
pub struct BerRecord {
    pub sweep: SweepAxis,
    pub value_db: f64,
    pub mode: ReceiverMode,
    pub frames: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
}

impl BerRecord {
    /// A simulated point that ran no frames; its `ber` is the 1.0 sentinel.
    pub fn is_empty_run(&self) -> bool {
        self.mode.is_simulated() && self.bits == 0
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    frames: u64,
    count: ErrorCount,
    done: bool,
}

/// Accumulates frames of one sweep point until every simulated mode has
/// `min_errors` errors or `max_frames` frames have run.
fn run_point(cfg: &SimConfig, point_index: u64) -> Result<Vec<(ReceiverMode, Tally)>> {
    let mut tallies: Vec<(ReceiverMode, Tally)> =
        cfg.modes.iter().copied().filter(|m| m.is_simulated()).map(|m| (m, Tally::default())).collect();
    tallies.sort_by_key(|(m, _)| *m);
    tallies.dedup_by_key(|(m, _)| *m);

    let stop = cfg.stopping;
    let mut next = 0u64;
    while next < stop.max_frames && tallies.iter().any(|(_, t)| !t.done) {
        let end = (next + BATCH_FRAMES).min(stop.max_frames);
        let mut batch_cfg = cfg.clone();
        batch_cfg.modes = tallies.iter().filter(|(_, t)| !t.done).map(|(m, _)| *m).collect();

        let results: Vec<FrameCounts> = (next..end)
            .into_par_iter()
            .map(|f| run_frame(&batch_cfg, derive_frame_seed(cfg.master_seed, f, point_index)))
            .collect::<Result<_>>()?;

        for counts in &results {
            for (mode, t) in tallies.iter_mut().filter(|(_, t)| !t.done) {
                let c = counts.get(*mode).expect("active mode was simulated");
                t.frames += 1;
                t.count.bits += c.bits;
                t.count.errors += c.errors;
                t.done = t.count.errors >= stop.min_errors;
            }
        }
        next = end;
    }
    Ok(tallies)
}

fn analytic_ber(cfg: &SimConfig) -> Result<f64> {
    ber_closed_form(&AnalyticParams::qpsk(vec![cfg.sir12_db, cfg.sir13_db], cfg.ebno_db))
}

/// Sweeps `axis` over `values_db`, calling `on_point` with the records of
/// each value as soon as it finishes. Returned records are sorted by
/// `(value_db, mode)`.
pub fn sweep_with_progress<F>(
    cfg: &SimConfig,
    axis: SweepAxis,
    values_db: &[f64],
    mut on_point: F,
) -> Result<Vec<BerRecord>>
where
    F: FnMut(&[BerRecord]),
{
    cfg.validate()?;
    if values_db.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let mut records = Vec::new();
    for (index, &value_db) in values_db.iter().enumerate() {
        let point = cfg.at(axis, value_db);
        point.validate()?;
        let tallies = pool.install(|| run_point(&point, index as u64))?;

        let mut rows: Vec<BerRecord> = tallies
            .into_iter()
            .map(|(mode, t)| BerRecord {
                sweep: axis,
                value_db,
                mode,
                frames: t.frames,
                bits: t.count.bits,
                bit_errors: t.count.errors,
                ber: if t.count.bits == 0 { 1.0 } else { t.count.errors as f64 / t.count.bits as f64 },
            })
            .collect();
        if point.wants(ReceiverMode::Analytic) {
            rows.push(BerRecord {
                sweep: axis,
                value_db,
                mode: ReceiverMode::Analytic,
                frames: 0,
                bits: 0,
                bit_errors: 0,
                ber: analytic_ber(&point)?,
            });
        }
        rows.sort_by_key(|r| r.mode);
        on_point(&rows);
        records.extend(rows);
    }
    records.sort_by(|a, b| a.value_db.total_cmp(&b.value_db).then(a.mode.cmp(&b.mode)));
    Ok(records)
}

pub fn sweep(cfg: &SimConfig, axis: SweepAxis, values_db: &[f64]) -> Result<Vec<BerRecord>> {
    sweep_with_progress(cfg, axis, values_db, |_| {})
}

/// `(value_db, ber)` points of one mode, ascending in value.
pub fn curve(records: &[BerRecord], mode: ReceiverMode) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = records.iter().filter(|r| r.mode == mode).map(|r| (r.value_db, r.ber)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

/// First swept value at which a falling BER curve reaches `target`,
/// interpolating `log10(BER)` linearly between neighbouring points.
pub fn ber_crossing(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    curve.windows(2).find_map(|w| {
        let ((x0, b0), (x1, b1)) = (w[0], w[1]);
        if !(b0 >= target && b1 <= target && b0 > b1) {
            return None;
        }
        let t = if b1 > 0.0 {
            (target.log10() - b0.log10()) / (b1.log10() - b0.log10())
        } else {
            (target - b0) / (b1 - b0)
        };
        Some(x0 + t * (x1 - x0))
    })
}

/// Horizontal distance in dB between two curves at `target`: how much
/// further right `reference` reaches the target than `improved`.
pub fn horizontal_gap(reference: &[(f64, f64)], improved: &[(f64, f64)], target: f64) -> Option<f64> {
    Some(ber_crossing(reference, target)? - ber_crossing(improved, target)?)
}
