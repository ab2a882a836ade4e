//! Rayleigh block-fading channels and the received-signal composition
//! `y(l) = Σ_i H_i(l) x_i(l) + n(l)`.
//!
//! Channels are quasi-static: one realization per frame, independent across
//! frames. Taps are sample spaced, and the longest delay never exceeds the
//! cyclic prefix, so the channel acts on each subcarrier as a single complex
//! gain. [`apply_time_domain`] checks that claim by convolving the OFDM
//! waveform directly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::modem::{FrameGrid, OfdmModem};
use crate::N_BS;

pub const MULTIPATH_TAPS: usize = 5;
pub const MULTIPATH_TAP_SPACING: usize = 3;
pub const DEFAULT_PDP_DECAY: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FadingKind {
    /// Fixed gain `√p_i`, no fading. Used to check the AWGN limit.
    Awgn,
    Flat,
    Multipath,
}

impl FadingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FadingKind::Awgn => "awgn",
            FadingKind::Flat => "flat",
            FadingKind::Multipath => "multipath",
        }
    }
}

impl fmt::Display for FadingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FadingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "awgn" => Ok(FadingKind::Awgn),
            "flat" => Ok(FadingKind::Flat),
            "multipath" => Ok(FadingKind::Multipath),
            other => Err(Error::Config(format!("unknown channel model '{other}'"))),
        }
    }
}

/// Power delay profile of the tapped delay line.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    kind: FadingKind,
    delays: Vec<usize>,
    powers: Vec<f64>,
}

impl ChannelModel {
    pub fn flat() -> Self {
        ChannelModel { kind: FadingKind::Flat, delays: vec![0], powers: vec![1.0] }
    }

    pub fn awgn() -> Self {
        ChannelModel { kind: FadingKind::Awgn, delays: vec![0], powers: vec![1.0] }
    }

    /// Five taps three samples apart with powers `∝ e^{-decay·k}`, normalized
    /// to unit total power.
    pub fn exponential(decay: f64) -> Result<Self> {
        if !decay.is_finite() || decay < 0.0 {
            return Err(Error::Config(format!("PDP decay must be finite and >= 0, got {decay}")));
        }
        let raw: Vec<f64> = (0..MULTIPATH_TAPS).map(|k| (-decay * k as f64).exp()).collect();
        let total: f64 = raw.iter().sum();
        let delays = (0..MULTIPATH_TAPS).map(|k| k * MULTIPATH_TAP_SPACING).collect();
        ChannelModel::new(FadingKind::Multipath, delays, raw.iter().map(|p| p / total).collect())
    }

    pub fn from_kind(kind: FadingKind, pdp_decay: f64) -> Result<Self> {
        match kind {
            FadingKind::Awgn => Ok(ChannelModel::awgn()),
            FadingKind::Flat => Ok(ChannelModel::flat()),
            FadingKind::Multipath => ChannelModel::exponential(pdp_decay),
        }
    }

    pub fn new(kind: FadingKind, delays: Vec<usize>, powers: Vec<f64>) -> Result<Self> {
        if delays.is_empty() || delays.len() != powers.len() {
            return Err(Error::Config("tap delays and powers must be nonempty and equal length".into()));
        }
        if powers.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("tap powers must be finite and nonnegative".into()));
        }
        let total: f64 = powers.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("tap powers sum to {total}, expected 1")));
        }
        if kind != FadingKind::Multipath && delays != [0] {
            return Err(Error::Config(format!("{kind} channel has a single zero-delay tap")));
        }
        Ok(ChannelModel { kind, delays, powers })
    }

    pub fn kind(&self) -> FadingKind {
        self.kind
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn max_delay(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    /// Errors when the delay spread exceeds the cyclic prefix.
    pub fn check_prefix(&self, cp_len: usize) -> Result<()> {
        if self.max_delay() > cp_len {
            return Err(Error::Config(format!("max tap delay {} exceeds cyclic prefix {cp_len}", self.max_delay())));
        }
        Ok(())
    }
}

/// Linear interferer power for a signal-to-interference ratio in dB;
/// `+inf` dB means the base station is silent.
pub fn sir_to_power(sir_db: f64) -> f64 {
    10f64.powf(-sir_db / 10.0)
}

/// Average powers `[1, 10^{-SIR12/10}, 10^{-SIR13/10}]`.
pub fn bs_powers(sir12_db: f64, sir13_db: f64) -> [f64; N_BS] {
    [1.0, sir_to_power(sir12_db), sir_to_power(sir13_db)]
}

/// Circularly symmetric complex Gaussian sample with total variance `variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * (variance / 2.0).sqrt()
}

/// Per-BS taps and frequency responses for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    delays: Vec<usize>,
    taps: [Vec<Complex64>; N_BS],
    response: [Vec<Complex64>; N_BS],
    powers: [f64; N_BS],
}

impl ChannelRealization {
    /// Builds the realization from explicit taps, computing
    /// `H_i(l) = Σ_k g_{i,k} e^{-j2π l d_k / n_fft}`.
    pub fn from_taps(
        delays: Vec<usize>,
        taps: [Vec<Complex64>; N_BS],
        powers: [f64; N_BS],
        n_fft: usize,
    ) -> Result<Self> {
        if let Some(t) = taps.iter().find(|t| t.len() != delays.len()) {
            return Err(Error::Size { expected: delays.len(), got: t.len() });
        }
        let response = std::array::from_fn(|bs| frequency_response(&delays, &taps[bs], n_fft));
        Ok(ChannelRealization { delays, taps, response, powers })
    }

    pub fn response(&self, bs: usize) -> &[Complex64] {
        &self.response[bs]
    }

    pub fn taps(&self, bs: usize) -> &[Complex64] {
        &self.taps[bs]
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    /// Average power `p_i` the realization was drawn with.
    pub fn power(&self, bs: usize) -> f64 {
        self.powers[bs]
    }

    pub fn n_subcarriers(&self) -> usize {
        self.response[0].len()
    }
}

fn frequency_response(delays: &[usize], taps: &[Complex64], n_fft: usize) -> Vec<Complex64> {
    (0..n_fft)
        .map(|l| {
            delays
                .iter()
                .zip(taps)
                .map(|(&d, &g)| {
                    // reduce before converting to keep the phase argument small
                    let k = (l * d) % n_fft;
                    g * Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n_fft as f64)
                })
                .sum()
        })
        .collect()
}

/// Draws independent Rayleigh taps for all three base stations (fixed real
/// gains for [`FadingKind::Awgn`]). `sirs` is `(SIR12, SIR13)` in dB.
pub fn draw_realization<R: Rng + ?Sized>(
    model: &ChannelModel,
    sirs: (f64, f64),
    n_fft: usize,
    rng: &mut R,
) -> ChannelRealization {
    let powers = bs_powers(sirs.0, sirs.1);
    let taps = std::array::from_fn(|bs| {
        model
            .powers
            .iter()
            .map(|&tp| match model.kind {
                FadingKind::Awgn => Complex64::new((powers[bs] * tp).sqrt(), 0.0),
                _ => complex_gaussian(rng, powers[bs] * tp),
            })
            .collect()
    });
    ChannelRealization::from_taps(model.delays.clone(), taps, powers, n_fft).expect("tap count matches the model")
}

/// Total complex noise variance per subcarrier for a unit-energy
/// constellation: `1 / (log2(M) · 10^{Eb/N0 / 10})`.
pub fn noise_variance(ebno_db: f64, order: u32) -> Result<f64> {
    if order != 4 {
        return Err(Error::UnsupportedModulation(order));
    }
    if ebno_db.is_nan() {
        return Err(Error::Domain("Eb/N0 is NaN".into()));
    }
    let bits_per_symbol = f64::from(order).log2();
    Ok(1.0 / (bits_per_symbol * 10f64.powf(ebno_db / 10.0)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub ebno_db: f64,
    pub sigma2: f64,
}

impl NoiseConfig {
    pub fn from_ebno(ebno_db: f64, order: u32) -> Result<Self> {
        Ok(NoiseConfig { ebno_db, sigma2: noise_variance(ebno_db, order)? })
    }
}

fn check_dims(grids: &[FrameGrid; N_BS], real: &ChannelRealization) -> Result<(usize, usize)> {
    let (n_sym, n_sc) = grids[0].dims();
    for g in &grids[1..] {
        if g.dims() != (n_sym, n_sc) {
            return Err(Error::Size { expected: n_sym * n_sc, got: g.n_symbols() * g.n_subcarriers() });
        }
    }
    if real.n_subcarriers() != n_sc {
        return Err(Error::Size { expected: n_sc, got: real.n_subcarriers() });
    }
    Ok((n_sym, n_sc))
}

/// Noiseless received grid, `Σ_i H_i(l) x_i(l)` per cell.
pub fn apply_channel(grids: &[FrameGrid; N_BS], real: &ChannelRealization) -> Result<FrameGrid> {
    let (n_sym, n_sc) = check_dims(grids, real)?;
    let mut out = FrameGrid::zeros(n_sc, n_sym);
    for (bs, grid) in grids.iter().enumerate() {
        let h = real.response(bs);
        for sym in 0..n_sym {
            for ((y, x), g) in out.symbol_mut(sym).iter_mut().zip(grid.symbol(sym)).zip(h) {
                *y += g * x;
            }
        }
    }
    Ok(out)
}

pub fn add_noise<R: Rng + ?Sized>(grid: &mut FrameGrid, sigma2: f64, rng: &mut R) {
    for y in grid.cells_mut() {
        *y += complex_gaussian(rng, sigma2);
    }
}

pub fn noise_grid<R: Rng + ?Sized>(n_subcarriers: usize, n_symbols: usize, sigma2: f64, rng: &mut R) -> FrameGrid {
    let mut grid = FrameGrid::zeros(n_subcarriers, n_symbols);
    add_noise(&mut grid, sigma2, rng);
    grid
}

/// Frequency-domain received grid with AWGN.
pub fn apply_and_sum<R: Rng + ?Sized>(
    grids: &[FrameGrid; N_BS],
    real: &ChannelRealization,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<FrameGrid> {
    let mut y = apply_channel(grids, real)?;
    add_noise(&mut y, noise.sigma2, rng);
    Ok(y)
}

/// Noiseless reception through the waveform: every grid is OFDM modulated
/// into one continuous stream, linearly convolved with its taps, summed, cut
/// back into symbols and demodulated.
pub fn apply_time_domain(grids: &[FrameGrid; N_BS], real: &ChannelRealization, modem: &OfdmModem) -> Result<FrameGrid> {
    let (n_sym, n_sc) = check_dims(grids, real)?;
    let sym_len = modem.symbol_len();
    let mut rx = vec![Complex64::new(0.0, 0.0); n_sym * sym_len];

    for (bs, grid) in grids.iter().enumerate() {
        let mut tx = Vec::with_capacity(n_sym * sym_len);
        for sym in 0..n_sym {
            tx.extend(modem.modulate(grid.symbol(sym))?);
        }
        for (&d, &g) in real.delays().iter().zip(real.taps(bs)) {
            for (n, x) in tx.iter().enumerate() {
                if let Some(y) = rx.get_mut(n + d) {
                    *y += g * x;
                }
            }
        }
    }

    let mut out = FrameGrid::zeros(n_sc, n_sym);
    for (sym, chunk) in rx.chunks_exact(sym_len).enumerate() {
        out.symbol_mut(sym).copy_from_slice(&modem.demodulate(chunk)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::{build_frames, FrameConfig, QpskSymbol};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_profile() {
        let m = ChannelModel::exponential(DEFAULT_PDP_DECAY).unwrap();
        assert_eq!(m.delays(), &[0, 3, 6, 9, 12]);
        assert!((m.powers().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.powers().windows(2).all(|w| w[0] > w[1]));
        assert!(m.check_prefix(16).is_ok());
        assert!(m.check_prefix(11).is_err());
        let ratio = m.powers()[1] / m.powers()[0];
        assert!((ratio - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(ChannelModel::new(FadingKind::Multipath, vec![0, 3], vec![0.5, 0.4]).is_err());
        assert!(ChannelModel::new(FadingKind::Multipath, vec![0], vec![0.5, 0.5]).is_err());
        assert!(ChannelModel::new(FadingKind::Flat, vec![3], vec![1.0]).is_err());
        assert!(ChannelModel::exponential(-1.0).is_err());
        assert_eq!("multipath".parse::<FadingKind>().unwrap(), FadingKind::Multipath);
        assert!("urban".parse::<FadingKind>().is_err());
    }

    #[test]
    fn noise_variance_examples() {
        assert_eq!(noise_variance(0.0, 4).unwrap(), 0.5);
        assert!((noise_variance(18.0, 4).unwrap() - 7.9245e-3).abs() < 5e-8);
        assert_eq!(noise_variance(f64::INFINITY, 4).unwrap(), 0.0);
        assert_eq!(noise_variance(10.0, 16), Err(Error::UnsupportedModulation(16)));
    }

    #[test]
    fn flat_is_constant_over_subcarriers() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = draw_realization(&ChannelModel::flat(), (0.0, 10.0), 64, &mut rng);
        for bs in 0..3 {
            assert_eq!(r.response(bs)[0], r.response(bs)[63]);
            assert!(r.response(bs).iter().all(|&h| h == r.taps(bs)[0]));
        }
    }

    #[test]
    fn multipath_dc_bin_is_tap_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = ChannelModel::exponential(1.0).unwrap();
        let r = draw_realization(&m, (0.0, 10.0), 64, &mut rng);
        for bs in 0..3 {
            let sum: Complex64 = r.taps(bs).iter().sum();
            assert!((r.response(bs)[0] - sum).norm() < 1e-14);
        }
    }

    #[test]
    fn infinite_sir_silences_bs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = draw_realization(&ChannelModel::flat(), (f64::INFINITY, f64::INFINITY), 64, &mut rng);
        assert!(r.response(1).iter().all(|h| h.norm() == 0.0));
        assert!(r.response(2).iter().all(|h| h.norm() == 0.0));
        assert!(r.response(0)[0].norm() > 0.0);
    }

    #[test]
    fn interferer_power_statistics() {
        // SIR13 = 10 dB: E|H3|² = 0.1, checked against the sample standard error
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = ChannelModel::exponential(1.0).unwrap();
        let n = 100_000;
        let samples: Vec<f64> =
            (0..n).map(|i| draw_realization(&m, (0.0, 10.0), 64, &mut rng).response(2)[i % 64].norm_sqr()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.1).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn identity_channel_passes_through() {
        let cfg = FrameConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bits: Vec<u8> = (0..cfg.bits_per_frame()).map(|_| rng.random_range(0..2)).collect();
        let tx = build_frames(&bits, &cfg, &mut rng).unwrap();
        let one = vec![Complex64::new(1.0, 0.0)];
        let zero = vec![Complex64::new(0.0, 0.0)];
        let real = ChannelRealization::from_taps(vec![0], [one, zero.clone(), zero], [1.0, 0.0, 0.0], 64).unwrap();
        let noise = NoiseConfig { ebno_db: f64::INFINITY, sigma2: 0.0 };
        let y = apply_and_sum(&tx.grids, &real, &noise, &mut rng).unwrap();
        assert_eq!(y, tx.grids[0]);
    }

    #[test]
    fn zero_input_gives_noise_of_requested_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grids = [FrameGrid::zeros(64, 57), FrameGrid::zeros(64, 57), FrameGrid::zeros(64, 57)];
        let real = draw_realization(&ChannelModel::flat(), (0.0, 0.0), 64, &mut rng);
        let noise = NoiseConfig::from_ebno(3.0, 4).unwrap();
        let mut acc = 0.0;
        let mut n = 0usize;
        for _ in 0..20 {
            let y = apply_and_sum(&grids, &real, &noise, &mut rng).unwrap();
            acc += y.cells().iter().map(|c| c.norm_sqr()).sum::<f64>();
            n += y.cells().len();
        }
        let var = acc / n as f64;
        assert!((var / noise.sigma2 - 1.0).abs() < 0.03, "{var} vs {}", noise.sigma2);
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let grids = [FrameGrid::zeros(64, 57), FrameGrid::zeros(64, 56), FrameGrid::zeros(64, 57)];
        let real = draw_realization(&ChannelModel::flat(), (0.0, 0.0), 64, &mut rng);
        assert!(matches!(apply_channel(&grids, &real), Err(Error::Size { .. })));
        let grids = [FrameGrid::zeros(32, 57), FrameGrid::zeros(32, 57), FrameGrid::zeros(32, 57)];
        assert!(matches!(apply_channel(&grids, &real), Err(Error::Size { .. })));
    }

    #[test]
    fn time_and_frequency_paths_agree() {
        let cfg = FrameConfig::default();
        let modem = OfdmModem::for_frame(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = ChannelModel::exponential(0.5).unwrap();
        let mut grids = [FrameGrid::for_frame(&cfg), FrameGrid::for_frame(&cfg), FrameGrid::for_frame(&cfg)];
        for g in grids.iter_mut() {
            for c in g.cells_mut() {
                *c = QpskSymbol::random(&mut rng).value();
            }
        }
        let real = draw_realization(&m, (0.0, 3.0), 64, &mut rng);
        let f = apply_channel(&grids, &real).unwrap();
        let t = apply_time_domain(&grids, &real, &modem).unwrap();
        let worst = f.cells().iter().zip(t.cells()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "max deviation {worst}");
    }
}
