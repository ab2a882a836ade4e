//! Soft-decision maximum-likelihood CCI canceler.
//!
//! On each subcarrier the receiver builds every replica `Σ_i ĥ_i a_i` over
//! the QPSK symbols of all three base stations and keeps the two cooperating
//! symbols of the closest one. The two hard decisions of each repeated
//! symbol are then merged with channel-magnitude weights (modified MRC) and
//! sliced.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::modem::{qpsk_slice, QpskSymbol};
use crate::N_BS;

/// `4^3` symbol combinations per subcarrier.
pub const REPLICA_COUNT: usize = 64;

/// Symbols of replica `m`, with `m = 16·a1 + 4·a2 + a3` over symbol indices.
pub fn replica_symbols(m: usize) -> [QpskSymbol; N_BS] {
    assert!(m < REPLICA_COUNT, "replica index out of range: {m}");
    [QpskSymbol::from_index(m >> 4), QpskSymbol::from_index((m >> 2) & 3), QpskSymbol::from_index(m & 3)]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Replica {
    pub index: usize,
    pub symbols: [QpskSymbol; N_BS],
    pub value: Complex64,
    /// Squared Euclidean distance `|y - value|²`.
    pub distance: f64,
}

/// All replicas for one received sample, evaluated directly.
pub fn replicas(y: Complex64, h: &[Complex64; N_BS]) -> Vec<Replica> {
    (0..REPLICA_COUNT)
        .map(|index| {
            let symbols = replica_symbols(index);
            let value: Complex64 = h.iter().zip(&symbols).map(|(g, s)| g * s.value()).sum();
            Replica { index, symbols, value, distance: (y - value).norm_sqr() }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlDecision {
    pub symbols: [QpskSymbol; N_BS],
    pub replica: usize,
    pub distance: f64,
}

impl MlDecision {
    /// The BS1 and BS2 decisions. The interferer's symbol is dropped.
    pub fn cooperating(&self) -> (QpskSymbol, QpskSymbol) {
        (self.symbols[0], self.symbols[1])
    }
}

/// Replica values for one subcarrier, built once per channel estimate and
/// reused for every OFDM symbol of the frame.
#[derive(Clone, Debug)]
pub struct ReplicaTable {
    values: [Complex64; REPLICA_COUNT],
}

impl ReplicaTable {
    pub fn new(h: &[Complex64; N_BS]) -> Self {
        let terms: [[Complex64; 4]; N_BS] =
            std::array::from_fn(|bs| std::array::from_fn(|k| h[bs] * QpskSymbol::from_index(k).value()));
        let mut values = [Complex64::new(0.0, 0.0); REPLICA_COUNT];
        for (m, v) in values.iter_mut().enumerate() {
            *v = terms[0][m >> 4] + terms[1][(m >> 2) & 3] + terms[2][m & 3];
        }
        ReplicaTable { values }
    }

    pub fn values(&self) -> &[Complex64; REPLICA_COUNT] {
        &self.values
    }

    pub fn distance(&self, y: Complex64, m: usize) -> f64 {
        (y - self.values[m]).norm_sqr()
    }

    /// Minimum-distance replica; ties go to the lowest index.
    pub fn decide(&self, y: Complex64) -> MlDecision {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (m, v) in self.values.iter().enumerate() {
            let d = (y - v).norm_sqr();
            if d < best_d {
                best_d = d;
                best = m;
            }
        }
        MlDecision { symbols: replica_symbols(best), replica: best, distance: best_d }
    }
}

pub fn mle_hard_decision(y: Complex64, h: &[Complex64; N_BS]) -> (QpskSymbol, QpskSymbol) {
    ReplicaTable::new(h).decide(y).cooperating()
}

/// Joint-ML decision of BS1's symbol when BS2 carries independent traffic.
pub fn detect_uncoordinated(table: &ReplicaTable, y: Complex64) -> QpskSymbol {
    table.decide(y).symbols[0]
}

/// Single-user slicing of `y / ĥ1`, treating both other stations as noise.
pub fn detect_conventional(y: Complex64, h1: Complex64) -> QpskSymbol {
    qpsk_slice(y / h1)
}

/// Hard decisions of the two repeated symbols on the two subcarriers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HardDecisions {
    pub p_a: QpskSymbol,
    pub q_a: QpskSymbol,
    pub p_b: QpskSymbol,
    pub q_b: QpskSymbol,
}

/// Channel estimates of the cooperating stations on both subcarriers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairGains {
    pub h1_a: Complex64,
    pub h2_a: Complex64,
    pub h1_b: Complex64,
    pub h2_b: Complex64,
}

impl PairGains {
    pub fn sum_a(&self) -> f64 {
        self.h1_a.norm() + self.h2_a.norm()
    }

    pub fn sum_b(&self) -> f64 {
        self.h1_b.norm() + self.h2_b.norm()
    }
}

/// Combining weights. Each lies in `[0, 1/2]`, and the two weights of one
/// subcarrier sum to `1/2` unless both gains there are zero, in which case
/// that subcarrier gets zero weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmrcWeights {
    pub p_a: f64,
    pub p_b: f64,
    pub q_a: f64,
    pub q_b: f64,
}

impl MmrcWeights {
    pub fn new(g: &PairGains) -> Result<Self> {
        let (sum_a, sum_b) = (g.sum_a(), g.sum_b());
        if sum_a == 0.0 && sum_b == 0.0 {
            return Err(Error::DegenerateChannel);
        }
        let share = |num: f64, den: f64| if den > 0.0 { num / (2.0 * den) } else { 0.0 };
        Ok(MmrcWeights {
            p_a: share(g.h1_a.norm(), sum_a),
            p_b: share(g.h2_b.norm(), sum_b),
            q_a: share(g.h2_a.norm(), sum_a),
            q_b: share(g.h1_b.norm(), sum_b),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftDecision {
    pub s_p: Complex64,
    pub s_q: Complex64,
    pub hard: HardDecisions,
    pub weights: MmrcWeights,
}

/// Weighted merge of the two copies of `s_p` and of `s_q`. `s_p` rides on
/// BS1 at `f_a` and BS2 at `f_b`, and `s_q` the other way round.
pub fn mmrc_combine(hard: HardDecisions, gains: &PairGains) -> Result<SoftDecision> {
    let weights = MmrcWeights::new(gains)?;
    Ok(soft(hard, weights))
}

fn soft(hard: HardDecisions, w: MmrcWeights) -> SoftDecision {
    SoftDecision {
        s_p: hard.p_a.value() * w.p_a + hard.p_b.value() * w.p_b,
        s_q: hard.q_a.value() * w.q_a + hard.q_b.value() * w.q_b,
        hard,
        weights: w,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairDetection {
    pub s_p: QpskSymbol,
    pub s_q: QpskSymbol,
    /// `None` when all four cooperating gains were zero and a single
    /// subcarrier's hard decisions were used instead.
    pub soft: Option<SoftDecision>,
}

impl PairDetection {
    pub fn is_fallback(&self) -> bool {
        self.soft.is_none()
    }
}

/// Detector for one subcarrier pair, holding both replica tables and the
/// combining weights so a frame's data symbols can share them.
#[derive(Clone, Debug)]
pub struct PairDetector {
    table_a: ReplicaTable,
    table_b: ReplicaTable,
    weights: Option<MmrcWeights>,
    prefer_b: bool,
}

impl PairDetector {
    /// `h_a`, `h_b`: estimates of all three stations at `f_a` and `f_b`.
    pub fn new(h_a: &[Complex64; N_BS], h_b: &[Complex64; N_BS]) -> Self {
        let gains = PairGains { h1_a: h_a[0], h2_a: h_a[1], h1_b: h_b[0], h2_b: h_b[1] };
        PairDetector {
            table_a: ReplicaTable::new(h_a),
            table_b: ReplicaTable::new(h_b),
            weights: MmrcWeights::new(&gains).ok(),
            prefer_b: gains.sum_b() > gains.sum_a(),
        }
    }

    pub fn hard_decisions(&self, y_a: Complex64, y_b: Complex64) -> HardDecisions {
        let (p_a, q_a) = self.table_a.decide(y_a).cooperating();
        // BS1 carries s_q on f_b, BS2 carries s_p
        let (q_b, p_b) = self.table_b.decide(y_b).cooperating();
        HardDecisions { p_a, q_a, p_b, q_b }
    }

    pub fn detect(&self, y_a: Complex64, y_b: Complex64) -> PairDetection {
        let hard = self.hard_decisions(y_a, y_b);
        match self.weights {
            Some(w) => {
                let soft = soft(hard, w);
                PairDetection { s_p: qpsk_slice(soft.s_p), s_q: qpsk_slice(soft.s_q), soft: Some(soft) }
            }
            None if self.prefer_b => PairDetection { s_p: hard.p_b, s_q: hard.q_b, soft: None },
            None => PairDetection { s_p: hard.p_a, s_q: hard.q_a, soft: None },
        }
    }
}

/// Detects one repeated pair from the samples on `f_a` and `f_b`.
pub fn detect_pair(y_a: Complex64, y_b: Complex64, h_a: &[Complex64; N_BS], h_b: &[Complex64; N_BS]) -> PairDetection {
    PairDetector::new(h_a, h_b).detect(y_a, y_b)
}
