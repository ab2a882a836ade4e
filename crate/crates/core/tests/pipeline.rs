use num_complex::Complex64;
use ofdm_cci::canceler::detect_pair;
use ofdm_cci::channel::{complex_gaussian, draw_realization, ChannelModel, FadingKind};
use ofdm_cci::harness::{curve, derive_frame_seed, sweep, ReceiverMode, SimConfig, StoppingRule, SweepAxis};
use ofdm_cci::modem::QpskSymbol;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn config(modes: &[ReceiverMode], frames: u64) -> SimConfig {
    SimConfig {
        modes: modes.to_vec(),
        master_seed: 21,
        stopping: StoppingRule { min_errors: u64::MAX, max_frames: frames },
        ..SimConfig::default()
    }
}

#[test]
fn awgn_baseline_follows_gaussian_tail() {
    let cfg = SimConfig {
        channel: FadingKind::Awgn,
        sir12_db: f64::INFINITY,
        sir13_db: f64::INFINITY,
        ..config(&[ReceiverMode::Baseline], 40)
    };
    let values = [0.0, 3.0, 6.0];
    let records = sweep(&cfg, SweepAxis::Ebno, &values).unwrap();
    for r in &records {
        let gamma = 10f64.powf(r.value_db / 10.0);
        let p = q_function((2.0 * gamma).sqrt());
        let sigma = (p * (1.0 - p) / r.bits as f64).sqrt();
        assert!((r.ber - p).abs() < 4.0 * sigma, "{} dB: {} vs {p}", r.value_db, r.ber);
    }
}

#[test]
fn stronger_interferer_hurts_proposed() {
    let records = sweep(&config(&[ReceiverMode::Proposed], 300), SweepAxis::Sir13, &[0.0, 20.0]).unwrap();
    let c = curve(&records, ReceiverMode::Proposed);
    assert!(c[0].1 >= c[1].1, "{c:?}");
}

#[test]
fn proposed_beats_baseline_on_every_point() {
    let modes = [ReceiverMode::Baseline, ReceiverMode::Proposed];
    let ebno = sweep(&config(&modes, 200), SweepAxis::Ebno, &[6.0, 12.0, 18.0, 24.0]).unwrap();
    let sir = sweep(&config(&modes, 200), SweepAxis::Sir13, &[-10.0, 0.0, 10.0, 20.0, 30.0]).unwrap();
    for records in [ebno, sir] {
        let base = curve(&records, ReceiverMode::Baseline);
        let prop = curve(&records, ReceiverMode::Proposed);
        for (b, p) in base.iter().zip(&prop) {
            assert!(p.1 < b.1, "at {} dB proposed {} vs baseline {}", b.0, p.1, b.1);
        }
    }
}

#[test]
fn sweeps_do_not_depend_on_worker_count() {
    let mut cfg = config(&ReceiverMode::ALL, 70);
    cfg.stopping.min_errors = 2000;
    cfg.workers = 1;
    let one = sweep(&cfg, SweepAxis::Sir13, &[0.0, 15.0]).unwrap();
    cfg.workers = 3;
    let three = sweep(&cfg, SweepAxis::Sir13, &[0.0, 15.0]).unwrap();
    assert_eq!(one, three);
}

#[test]
fn channel_draws_are_uncorrelated_across_frames() {
    let model = ChannelModel::flat();
    let n = 10_000;
    let draws: Vec<Complex64> = (0..n)
        .map(|f| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_frame_seed(5, f, 0));
            draw_realization(&model, (0.0, 10.0), 64, &mut rng).response(0)[0]
        })
        .collect();
    let power = draws.iter().map(|h| h.norm_sqr()).sum::<f64>() / n as f64;
    let lag: Complex64 = draws.windows(2).map(|w| w[0] * w[1].conj()).sum::<Complex64>() / (n - 1) as f64;
    assert!((power - 1.0).abs() < 0.05, "{power}");
    assert!(lag.norm() / power < 0.05, "{}", lag.norm() / power);
}

fn naive_symbol(i: usize) -> Complex64 {
    Complex64::new(1.0 - 2.0 * ((i >> 1) & 1) as f64, 1.0 - 2.0 * (i & 1) as f64) / 2f64.sqrt()
}

fn naive_ml(y: Complex64, h: &[Complex64; 3]) -> (usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for m in 0..64 {
        let (a1, a2, a3) = (m / 16, (m / 4) % 4, m % 4);
        let d = (y - h[0] * naive_symbol(a1) - h[1] * naive_symbol(a2) - h[2] * naive_symbol(a3)).norm_sqr();
        if d < best.0 {
            best = (d, a1, a2);
        }
    }
    (best.1, best.2)
}

fn naive_slice(x: Complex64) -> usize {
    (usize::from(x.re < 0.0) << 1) | usize::from(x.im < 0.0)
}

fn naive_pair(y_a: Complex64, y_b: Complex64, h_a: &[Complex64; 3], h_b: &[Complex64; 3]) -> (usize, usize) {
    let (p_a, q_a) = naive_ml(y_a, h_a);
    let (q_b, p_b) = naive_ml(y_b, h_b);
    let sum_a = h_a[0].norm() + h_a[1].norm();
    let sum_b = h_b[0].norm() + h_b[1].norm();
    let s_p = naive_symbol(p_a) * h_a[0].norm() / (2.0 * sum_a) + naive_symbol(p_b) * h_b[1].norm() / (2.0 * sum_b);
    let s_q = naive_symbol(q_a) * h_a[1].norm() / (2.0 * sum_a) + naive_symbol(q_b) * h_b[0].norm() / (2.0 * sum_b);
    (naive_slice(s_p), naive_slice(s_q))
}

#[test]
fn pair_detection_matches_naive_receiver() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let h_a: [Complex64; 3] = std::array::from_fn(|i| complex_gaussian(&mut rng, [1.0, 1.0, 0.1][i]));
        let h_b: [Complex64; 3] = std::array::from_fn(|i| complex_gaussian(&mut rng, [1.0, 1.0, 0.1][i]));
        let (p, q, r_a, r_b) =
            (rng.random_range(0..4), rng.random_range(0..4), rng.random_range(0..4), rng.random_range(0..4));
        let y_a = h_a[0] * naive_symbol(p)
            + h_a[1] * naive_symbol(q)
            + h_a[2] * naive_symbol(r_a)
            + complex_gaussian(&mut rng, 0.05);
        let y_b = h_b[0] * naive_symbol(q)
            + h_b[1] * naive_symbol(p)
            + h_b[2] * naive_symbol(r_b)
            + complex_gaussian(&mut rng, 0.05);

        let got = detect_pair(y_a, y_b, &h_a, &h_b);
        let want = naive_pair(y_a, y_b, &h_a, &h_b);
        assert_eq!((got.s_p, got.s_q), (QpskSymbol::from_index(want.0), QpskSymbol::from_index(want.1)));
    }
}
