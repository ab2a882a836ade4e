//! Per-base-station channel estimation from time-orthogonal pilots.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::modem::{FrameConfig, FrameGrid, PILOT};
use crate::N_BS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsiMode {
    /// The receiver knows the true frequency responses.
    Perfect,
    /// Least-squares estimates from each base station's own pilot symbols.
    Ls,
}

impl CsiMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CsiMode::Perfect => "perfect",
            CsiMode::Ls => "ls",
        }
    }
}

impl fmt::Display for CsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(CsiMode::Perfect),
            "ls" => Ok(CsiMode::Ls),
            other => Err(Error::Config(format!("unknown CSI mode '{other}'"))),
        }
    }
}

/// Pilot-derived power figures for one base station, averaged over
/// subcarriers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PilotQuality {
    /// Estimated `E|H|²` with the estimation-noise contribution removed.
    pub signal_power: f64,
    /// Noise variance estimated from the spread between repeated pilots.
    pub noise_power: f64,
}

impl PilotQuality {
    /// Pilot signal-to-noise ratio. Infinite for a noiseless pilot.
    pub fn snr(&self) -> f64 {
        self.signal_power / self.noise_power
    }

    /// `false` when the pilot looks like noise only (SNR at or below 0 dB),
    /// e.g. for a silent base station or a missing pilot.
    pub fn is_reliable(&self) -> bool {
        self.signal_power > self.noise_power
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelEstimate {
    mode: CsiMode,
    response: [Vec<Complex64>; N_BS],
    quality: Option<[PilotQuality; N_BS]>,
}

impl ChannelEstimate {
    pub fn mode(&self) -> CsiMode {
        self.mode
    }

    pub fn response(&self, bs: usize) -> &[Complex64] {
        &self.response[bs]
    }

    /// The three estimates at one subcarrier.
    #[inline]
    pub fn at(&self, subcarrier: usize) -> [Complex64; N_BS] {
        std::array::from_fn(|bs| self.response[bs][subcarrier])
    }

    /// Pilot quality per base station; `None` in perfect-CSI mode.
    pub fn quality(&self) -> Option<&[PilotQuality; N_BS]> {
        self.quality.as_ref()
    }
}

pub fn estimate_perfect(real: &ChannelRealization) -> ChannelEstimate {
    ChannelEstimate {
        mode: CsiMode::Perfect,
        response: std::array::from_fn(|bs| real.response(bs).to_vec()),
        quality: None,
    }
}

/// LS estimate: for each base station, `y(l) / pilot` averaged over the
/// pilot symbols it owns. Other stations are silent on those symbols, so no
/// interference term remains.
pub fn estimate_ls(received: &FrameGrid, cfg: &FrameConfig) -> Result<ChannelEstimate> {
    if received.dims() != (cfg.n_symbols(), cfg.n_fft()) {
        return Err(Error::Size { expected: cfg.n_symbols() * cfg.n_fft(), got: received.cells().len() });
    }
    let n_sc = cfg.n_fft();
    let mut response: [Vec<Complex64>; N_BS] = Default::default();
    let mut quality = [PilotQuality { signal_power: 0.0, noise_power: 0.0 }; N_BS];

    for bs in 0..N_BS {
        let owned = cfg.pilot_symbols(bs);
        let n_pilots = owned.len() as f64;
        let mut h = Vec::with_capacity(n_sc);
        let mut spread = 0.0;
        for l in 0..n_sc {
            let obs: Vec<Complex64> = owned.iter().map(|&s| received.get(s, l) / PILOT).collect();
            let mean = obs.iter().sum::<Complex64>() / n_pilots;
            spread += obs.iter().map(|o| (o - mean).norm_sqr()).sum::<f64>() / (n_pilots - 1.0);
            h.push(mean);
        }
        let noise_power = spread / n_sc as f64;
        let raw_power = h.iter().map(|x| x.norm_sqr()).sum::<f64>() / n_sc as f64;
        quality[bs] = PilotQuality { signal_power: (raw_power - noise_power / n_pilots).max(0.0), noise_power };
        response[bs] = h;
    }

    Ok(ChannelEstimate { mode: CsiMode::Ls, response, quality: Some(quality) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{add_noise, apply_channel, draw_realization, ChannelModel};
    use crate::modem::build_frames;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(rng: &mut ChaCha8Rng, cfg: &FrameConfig) -> [FrameGrid; N_BS] {
        let bits: Vec<u8> = (0..cfg.bits_per_frame()).map(|_| rng.random_range(0..2)).collect();
        build_frames(&bits, cfg, rng).unwrap().grids
    }

    #[test]
    fn perfect_mode_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let real = draw_realization(&ChannelModel::exponential(1.0).unwrap(), (0.0, 10.0), 64, &mut rng);
        let est = estimate_perfect(&real);
        for bs in 0..3 {
            assert_eq!(est.response(bs), real.response(bs));
        }
        assert!(est.quality().is_none());
    }

    #[test]
    fn noiseless_ls_recovers_channel() {
        let cfg = FrameConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grids = frame(&mut rng, &cfg);
        let real = draw_realization(&ChannelModel::exponential(1.0).unwrap(), (0.0, 10.0), 64, &mut rng);
        let y = apply_channel(&grids, &real).unwrap();
        let est = estimate_ls(&y, &cfg).unwrap();
        for bs in 0..3 {
            for (a, b) in est.response(bs).iter().zip(real.response(bs)) {
                assert!((a - b).norm() < 1e-12);
            }
            assert!(est.quality().unwrap()[bs].is_reliable());
        }
    }

    #[test]
    fn ls_error_is_unbiased_with_half_noise_variance() {
        let cfg = FrameConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma2 = 0.2;
        let grids = frame(&mut rng, &cfg);
        let real = draw_realization(&ChannelModel::flat(), (0.0, 10.0), 64, &mut rng);
        let clean = apply_channel(&grids, &real).unwrap();

        // 1600 frames × 64 subcarriers ≈ 1e5 error samples for BS1
        let mut errs = Vec::new();
        for _ in 0..1600 {
            let mut y = clean.clone();
            add_noise(&mut y, sigma2, &mut rng);
            let est = estimate_ls(&y, &cfg).unwrap();
            errs.extend(est.response(0).iter().zip(real.response(0)).map(|(e, h)| e - h));
        }
        let n = errs.len() as f64;
        let mean: Complex64 = errs.iter().sum::<Complex64>() / n;
        let var = errs.iter().map(|e| (e - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
        // per-component standard error of the mean is sqrt(var/2/n)
        let se = (var / 2.0 / n).sqrt();
        assert!(mean.re.abs() < 3.0 * se && mean.im.abs() < 3.0 * se, "bias {mean}");
        assert!((var / (sigma2 / 2.0) - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn missing_pilot_is_flagged() {
        let cfg = FrameConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut grids = frame(&mut rng, &cfg);
        for &s in cfg.pilot_symbols(2) {
            grids[2].symbol_mut(s).fill(Complex64::new(0.0, 0.0));
        }
        let real = draw_realization(&ChannelModel::flat(), (0.0, 0.0), 64, &mut rng);
        let mut y = apply_channel(&grids, &real).unwrap();
        add_noise(&mut y, 0.05, &mut rng);
        let est = estimate_ls(&y, &cfg).unwrap();
        let q = est.quality().unwrap();
        assert!(q[0].is_reliable() && q[1].is_reliable());
        assert!(!q[2].is_reliable(), "{:?}", q[2]);
        // the estimate itself is pure noise of variance sigma2/2
        let p = est.response(2).iter().map(|h| h.norm_sqr()).sum::<f64>() / 64.0;
        assert!(p < 0.1);
    }

    #[test]
    fn size_mismatch() {
        let cfg = FrameConfig::default();
        assert!(matches!(estimate_ls(&FrameGrid::zeros(64, 10), &cfg), Err(Error::Size { .. })));
    }

    #[test]
    fn parse_modes() {
        assert_eq!("ls".parse::<CsiMode>().unwrap(), CsiMode::Ls);
        assert_eq!("perfect".parse::<CsiMode>().unwrap(), CsiMode::Perfect);
        assert!("mmse".parse::<CsiMode>().is_err());
    }
}
