//! QPSK mapping, cyclic-prefix OFDM and frame construction.
//!
//! A frame is a `n_symbols × n_fft` frequency-domain grid per base station.
//! Data cells of BS1 and BS2 carry coordinated symbol repetition: on every
//! subcarrier pair `(f_a, f_b)` BS1 sends `(s_p, s_q)` and BS2 sends
//! `(s_q, s_p)`. Pilot OFDM symbols are owned by exactly one base station;
//! the other two are silent there, which keeps the pilots orthogonal in time.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::N_BS;

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Known pilot value transmitted on every subcarrier of an owned pilot symbol.
pub const PILOT: Complex64 = Complex64::new(1.0, 0.0);

const QPSK_POINTS: [Complex64; 4] = [
    Complex64::new(INV_SQRT_2, INV_SQRT_2),
    Complex64::new(INV_SQRT_2, -INV_SQRT_2),
    Complex64::new(-INV_SQRT_2, INV_SQRT_2),
    Complex64::new(-INV_SQRT_2, -INV_SQRT_2),
];

/// A point of the unit-energy Gray-mapped QPSK alphabet.
///
/// The index is the bit pair read as a two-bit number, `(b0 << 1) | b1`, and
/// the point is `((1 - 2 b0) + j (1 - 2 b1)) / √2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QpskSymbol(u8);

impl QpskSymbol {
    pub const ALPHABET: [QpskSymbol; 4] = [QpskSymbol(0), QpskSymbol(1), QpskSymbol(2), QpskSymbol(3)];

    /// Panics if `index > 3`.
    pub fn from_index(index: usize) -> Self {
        assert!(index < 4, "QPSK index out of range: {index}");
        QpskSymbol(index as u8)
    }

    pub fn from_bits(b0: u8, b1: u8) -> Self {
        debug_assert!(b0 <= 1 && b1 <= 1, "bits must be 0 or 1");
        QpskSymbol(((b0 & 1) << 1) | (b1 & 1))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn bits(self) -> (u8, u8) {
        (self.0 >> 1, self.0 & 1)
    }

    pub fn value(self) -> Complex64 {
        QPSK_POINTS[self.0 as usize]
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        QpskSymbol(rng.random_range(0..4u8))
    }

    /// Number of differing bits between two symbols.
    pub fn bit_distance(self, other: QpskSymbol) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

pub fn qpsk_map(b0: u8, b1: u8) -> QpskSymbol {
    QpskSymbol::from_bits(b0, b1)
}

/// Nearest-point hard decision. A component that is exactly zero decides
/// toward bit 0.
pub fn qpsk_slice(x: Complex64) -> QpskSymbol {
    QpskSymbol::from_bits(u8::from(x.re < 0.0), u8::from(x.im < 0.0))
}

pub fn qpsk_demap(x: Complex64) -> (u8, u8) {
    qpsk_slice(x).bits()
}

/// Time-frequency layout of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameConfig {
    n_fft: usize,
    cp_len: usize,
    n_symbols: usize,
    pilot_symbols: [[usize; 2]; N_BS],
    pairs: Vec<(usize, usize)>,
    data_symbols: Vec<usize>,
}

impl Default for FrameConfig {
    /// 64 subcarriers, 16-sample CP, 57 OFDM symbols of which 6 are pilots,
    /// subcarrier `l` paired with `l + 32`.
    fn default() -> Self {
        FrameConfig::new(64, 16, 57, [[0, 19], [1, 20], [38, 39]], offset_pairs(64, 32))
            .expect("default frame layout is valid")
    }
}

/// Pairs `l` with `l + offset` inside consecutive blocks of `2 * offset`.
fn offset_pairs(n_fft: usize, offset: usize) -> Vec<(usize, usize)> {
    (0..n_fft).filter(|l| l % (2 * offset) < offset).map(|l| (l, l + offset)).collect()
}

impl FrameConfig {
    pub fn new(
        n_fft: usize,
        cp_len: usize,
        n_symbols: usize,
        pilot_symbols: [[usize; 2]; N_BS],
        pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if n_fft == 0 || !n_fft.is_multiple_of(2) {
            return Err(Error::Config(format!("n_fft must be even and nonzero, got {n_fft}")));
        }
        if cp_len >= n_fft {
            return Err(Error::Config(format!("cp_len {cp_len} must be below n_fft {n_fft}")));
        }
        let mut owner = vec![None; n_symbols];
        for (bs, owned) in pilot_symbols.iter().enumerate() {
            for &sym in owned {
                match owner.get_mut(sym) {
                    None => return Err(Error::Config(format!("pilot symbol {sym} outside frame of {n_symbols}"))),
                    Some(Some(_)) => return Err(Error::Config(format!("pilot symbol {sym} assigned twice"))),
                    Some(slot) => *slot = Some(bs),
                }
            }
        }
        let data_symbols: Vec<usize> = (0..n_symbols).filter(|&s| owner[s].is_none()).collect();
        if data_symbols.is_empty() {
            return Err(Error::Config("frame has no data symbols".into()));
        }

        let mut used = vec![false; n_fft];
        for &(a, b) in &pairs {
            for l in [a, b] {
                if l >= n_fft || used[l] {
                    return Err(Error::Config(format!("pairing is not a perfect matching (subcarrier {l})")));
                }
                used[l] = true;
            }
        }
        if pairs.len() * 2 != n_fft {
            return Err(Error::Config(format!("pairing covers {} of {n_fft} subcarriers", pairs.len() * 2)));
        }

        Ok(FrameConfig { n_fft, cp_len, n_symbols, pilot_symbols, pairs, data_symbols })
    }

    /// Same layout with subcarrier `l` paired to `l + offset` in blocks of
    /// `2 * offset`. `offset = n_fft / 2` gives maximal separation, `1` pairs
    /// neighbours.
    pub fn with_pair_offset(self, offset: usize) -> Result<Self> {
        if offset == 0 || !self.n_fft.is_multiple_of(2 * offset) {
            return Err(Error::Config(format!("pair offset {offset} does not tile {} subcarriers", self.n_fft)));
        }
        let pairs = offset_pairs(self.n_fft, offset);
        FrameConfig::new(self.n_fft, self.cp_len, self.n_symbols, self.pilot_symbols, pairs)
    }

    pub fn with_pairs(self, pairs: Vec<(usize, usize)>) -> Result<Self> {
        FrameConfig::new(self.n_fft, self.cp_len, self.n_symbols, self.pilot_symbols, pairs)
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Pilot OFDM symbol indices owned by base station `bs` (0-based).
    pub fn pilot_symbols(&self, bs: usize) -> &[usize; 2] {
        &self.pilot_symbols[bs]
    }

    pub fn pilot_owner(&self, symbol: usize) -> Option<usize> {
        self.pilot_symbols.iter().position(|owned| owned.contains(&symbol))
    }

    /// OFDM symbol indices carrying data, ascending.
    pub fn data_symbols(&self) -> &[usize] {
        &self.data_symbols
    }

    /// Information bits carried by one coordinated frame.
    pub fn bits_per_frame(&self) -> usize {
        self.data_symbols.len() * self.pairs.len() * 4
    }
}

/// Frequency-domain symbols of one base station (or of the receiver), stored
/// OFDM-symbol-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGrid {
    n_subcarriers: usize,
    n_symbols: usize,
    cells: Vec<Complex64>,
}

impl FrameGrid {
    pub fn zeros(n_subcarriers: usize, n_symbols: usize) -> Self {
        FrameGrid { n_subcarriers, n_symbols, cells: vec![Complex64::new(0.0, 0.0); n_subcarriers * n_symbols] }
    }

    pub fn for_frame(cfg: &FrameConfig) -> Self {
        FrameGrid::zeros(cfg.n_fft, cfg.n_symbols)
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_symbols, self.n_subcarriers)
    }

    #[inline]
    pub fn get(&self, symbol: usize, subcarrier: usize) -> Complex64 {
        self.cells[symbol * self.n_subcarriers + subcarrier]
    }

    #[inline]
    pub fn set(&mut self, symbol: usize, subcarrier: usize, value: Complex64) {
        self.cells[symbol * self.n_subcarriers + subcarrier] = value;
    }

    pub fn symbol(&self, symbol: usize) -> &[Complex64] {
        let start = symbol * self.n_subcarriers;
        &self.cells[start..start + self.n_subcarriers]
    }

    pub fn symbol_mut(&mut self, symbol: usize) -> &mut [Complex64] {
        let start = symbol * self.n_subcarriers;
        &mut self.cells[start..start + self.n_subcarriers]
    }

    pub fn cells(&self) -> &[Complex64] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [Complex64] {
        &mut self.cells
    }
}

/// One coordinated repetition: BS1 sends `s_p` on `f_a` and `s_q` on `f_b`,
/// BS2 sends them swapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CsrPair {
    pub f_a: usize,
    pub f_b: usize,
    pub s_p: QpskSymbol,
    pub s_q: QpskSymbol,
}

/// The three transmitted grids plus the repeated symbols for error counting.
#[derive(Clone, Debug)]
pub struct TransmitFrame {
    pub grids: [FrameGrid; N_BS],
    /// Indexed `data_symbol * n_pairs + pair`, following
    /// [`FrameConfig::data_symbols`] and [`FrameConfig::pairs`].
    pub pairs: Vec<CsrPair>,
}

fn place_pilots(grids: &mut [FrameGrid; N_BS], cfg: &FrameConfig) {
    for (bs, grid) in grids.iter_mut().enumerate() {
        for &sym in cfg.pilot_symbols(bs) {
            grid.symbol_mut(sym).fill(PILOT);
        }
    }
}

/// Builds the coordinated BS1/BS2 grids from `data_bits` and fills BS3 with
/// independent QPSK traffic drawn from `rng`.
///
/// Bits are consumed four per pair: two for `s_p`, then two for `s_q`, pairs
/// in order within each data symbol.
pub fn build_frames<R: Rng + ?Sized>(data_bits: &[u8], cfg: &FrameConfig, rng: &mut R) -> Result<TransmitFrame> {
    let needed = cfg.bits_per_frame();
    if data_bits.len() < needed {
        return Err(Error::InsufficientBits { needed, got: data_bits.len() });
    }

    let mut grids = [FrameGrid::for_frame(cfg), FrameGrid::for_frame(cfg), FrameGrid::for_frame(cfg)];
    place_pilots(&mut grids, cfg);

    let mut pairs = Vec::with_capacity(cfg.data_symbols.len() * cfg.pairs.len());
    let mut bits = data_bits.chunks_exact(2);
    for &sym in &cfg.data_symbols {
        for &(f_a, f_b) in &cfg.pairs {
            let mut next = || {
                let b = bits.next().expect("length checked above");
                qpsk_map(b[0], b[1])
            };
            let s_p = next();
            let s_q = next();
            grids[0].set(sym, f_a, s_p.value());
            grids[0].set(sym, f_b, s_q.value());
            grids[1].set(sym, f_a, s_q.value());
            grids[1].set(sym, f_b, s_p.value());
            pairs.push(CsrPair { f_a, f_b, s_p, s_q });
        }
    }

    for &sym in &cfg.data_symbols {
        for cell in grids[2].symbol_mut(sym) {
            *cell = QpskSymbol::random(rng).value();
        }
    }

    Ok(TransmitFrame { grids, pairs })
}

/// Grids for the same frame without coordination: BS1 and BS3 unchanged, BS2
/// carries its own independent traffic on every data cell.
pub fn uncoordinated_grids<R: Rng + ?Sized>(
    frame: &TransmitFrame,
    cfg: &FrameConfig,
    rng: &mut R,
) -> [FrameGrid; N_BS] {
    let mut grids = frame.grids.clone();
    for &sym in &cfg.data_symbols {
        for cell in grids[1].symbol_mut(sym) {
            *cell = QpskSymbol::random(rng).value();
        }
    }
    grids
}

/// Cyclic-prefix OFDM with a unitary DFT.
#[derive(Clone)]
pub struct OfdmModem {
    n_fft: usize,
    cp_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for OfdmModem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OfdmModem").field("n_fft", &self.n_fft).field("cp_len", &self.cp_len).finish()
    }
}

impl OfdmModem {
    pub fn new(n_fft: usize, cp_len: usize) -> Self {
        let mut planner = FftPlanner::new();
        OfdmModem { n_fft, cp_len, forward: planner.plan_fft_forward(n_fft), inverse: planner.plan_fft_inverse(n_fft) }
    }

    pub fn for_frame(cfg: &FrameConfig) -> Self {
        OfdmModem::new(cfg.n_fft, cfg.cp_len)
    }

    pub fn symbol_len(&self) -> usize {
        self.n_fft + self.cp_len
    }

    /// Inverse DFT scaled by `1/√N`, then the last `cp_len` samples are
    /// prepended.
    pub fn modulate(&self, freq: &[Complex64]) -> Result<Vec<Complex64>> {
        if freq.len() != self.n_fft {
            return Err(Error::Size { expected: self.n_fft, got: freq.len() });
        }
        let mut body = freq.to_vec();
        self.inverse.process(&mut body);
        let scale = 1.0 / (self.n_fft as f64).sqrt();
        body.iter_mut().for_each(|x| *x *= scale);

        let mut out = Vec::with_capacity(self.symbol_len());
        out.extend_from_slice(&body[self.n_fft - self.cp_len..]);
        out.extend_from_slice(&body);
        Ok(out)
    }

    /// Drops the cyclic prefix and applies the DFT scaled by `1/√N`.
    pub fn demodulate(&self, time: &[Complex64]) -> Result<Vec<Complex64>> {
        if time.len() != self.symbol_len() {
            return Err(Error::Size { expected: self.symbol_len(), got: time.len() });
        }
        let mut body = time[self.cp_len..].to_vec();
        self.forward.process(&mut body);
        let scale = 1.0 / (self.n_fft as f64).sqrt();
        body.iter_mut().for_each(|x| *x *= scale);
        Ok(body)
    }
}
