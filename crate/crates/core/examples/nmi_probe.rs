//! Quick empirical probe of the random-model entropy and NMI bands.
//! Run: cargo run -p anondq --example nmi_probe --release

use anondq::info_theory::{entropy_nats, nmi_scored_vecs, MetricOutcome, NmiConfig, NmiVariant};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

fn main() {
    let n = 50_000;
    let (b, c) = (0.40, 0.05);
    let mut rng = ChaCha20Rng::seed_from_u64(20240801);
    let mut xs = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for _ in 0..n {
        let x = 1000.0 * rng.random::<f64>();
        let y: f64 = rng.random();
        let z: f64 = rng.random();
        xs.push(x);
        ts.push(x + b * x * y + c * z);
    }

    for (name, decimals) in [("none", None), ("0", Some(0)), ("-1", Some(-1)), ("-2", Some(-2))] {
        let xr: Vec<f64> = match decimals {
            None => xs.clone(),
            Some(d) => xs.iter().map(|&x| round_to(x, d)).collect(),
        };
        let h = entropy_nats(&xr);
        let t0 = std::time::Instant::now();
        let out = nmi_scored_vecs(&xr, &ts, &NmiConfig::default(), NmiVariant::V1, 0).unwrap();
        let el = t0.elapsed();
        match out {
            MetricOutcome::Applicable(s) => {
                println!(
                    "round={name:>4}  H={h:7.3}  raw={:.4}  scaled={:.4}  mi={:.4}  h_samp={:.3}  ({el:?})",
                    s.raw, s.value, s.estimate.mi_nats, s.estimate.h_original_nats
                );
            }
            MetricOutcome::NotApplicable(r) => println!("round={name}: NA ({r})"),
        }
    }

    // sampling stability: full 60k vs a 10k subset
    let n2 = 60_000;
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let mut xs2 = Vec::with_capacity(n2);
    let mut ts2 = Vec::with_capacity(n2);
    for _ in 0..n2 {
        let x = 1000.0 * rng.random::<f64>();
        let y: f64 = rng.random();
        let z: f64 = rng.random();
        xs2.push(x);
        ts2.push(x + b * x * y + c * z);
    }
    let full = match nmi_scored_vecs(&xs2, &ts2, &NmiConfig::default(), NmiVariant::V1, 0).unwrap() {
        MetricOutcome::Applicable(s) => s.value,
        _ => f64::NAN,
    };
    let sub = match nmi_scored_vecs(&xs2[..10_000], &ts2[..10_000], &NmiConfig::default(), NmiVariant::V1, 0).unwrap() {
        MetricOutcome::Applicable(s) => s.value,
        _ => f64::NAN,
    };
    println!("sampled full60k={full:.4}  sub10k={sub:.4}  |diff|={:.4}", (full - sub).abs());

    // unsampled drift that sampling is meant to remove
    let unsampled_cfg = NmiConfig { sample_size: usize::MAX, ..NmiConfig::default() };
    let raw_60k = match nmi_scored_vecs(&xs2, &ts2, &unsampled_cfg, NmiVariant::V1, 0).unwrap() {
        MetricOutcome::Applicable(s) => s.raw,
        _ => f64::NAN,
    };
    let raw_10k = match nmi_scored_vecs(&xs2[..10_000], &ts2[..10_000], &unsampled_cfg, NmiVariant::V1, 0).unwrap() {
        MetricOutcome::Applicable(s) => s.raw,
        _ => f64::NAN,
    };
    println!("unsampled raw ratios: 60k={raw_60k:.4}  10k={raw_10k:.4}");
}
