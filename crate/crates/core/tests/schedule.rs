use cdtd_core::schedule::{cdf_dalog, pdf_dalog, quantile_dalog, ScheduleParams, FIT_LR};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Independent cdf: `1 / (1 + ((1−μ)/μ · σ/(1−σ))^(−ν))` through logs.
fn oracle_cdf(s: f64, mu: f64, nu: f64) -> f64 {
    let log_odds = (s / (1.0 - s)).ln() - (mu / (1.0 - mu)).ln();
    1.0 / (1.0 + (-nu * log_odds).exp())
}

#[test]
fn cdf_at_half_is_exact() {
    assert_eq!(cdf_dalog(0.5, 0.25, 1.0).unwrap(), 0.75);
}

#[test]
fn cdf_quantile_round_trip_on_grid() {
    for &(mu, nu) in &[(0.25, 1.01), (0.4, 3.0), (0.05, 7.5), (0.9, 1.5)] {
        let mut worst: f64 = 0.0;
        for i in 1..10_000 {
            let t = i as f64 / 10_000.0;
            let s = quantile_dalog(t, mu, nu).unwrap();
            if s <= 0.0 || s >= 1.0 {
                continue;
            }
            worst = worst.max((cdf_dalog(s, mu, nu).unwrap() - t).abs());
        }
        assert!(worst <= 1e-9, "mu={mu} nu={nu}: {worst}");
    }
}

#[test]
fn pdf_matches_finite_differences() {
    for &(mu, nu) in &[(0.25, 1.01), (0.4, 3.0), (0.7, 2.0)] {
        for i in 1..1000 {
            let s = i as f64 / 1000.0;
            let h = 1e-5 * s.min(1.0 - s);
            // Difference whichever tail is small, using F(σ; μ, ν) = 1 − F(1 − σ; 1 − μ, ν).
            let fd = if cdf_dalog(s, mu, nu).unwrap() < 0.5 {
                (cdf_dalog(s + h, mu, nu).unwrap() - cdf_dalog(s - h, mu, nu).unwrap()) / (2.0 * h)
            } else {
                (cdf_dalog(1.0 - s + h, 1.0 - mu, nu).unwrap() - cdf_dalog(1.0 - s - h, 1.0 - mu, nu).unwrap()) / (2.0 * h)
            };
            let an = pdf_dalog(s, mu, nu).unwrap();
            if an < 1e-8 {
                continue;
            }
            assert!((an - fd).abs() / an <= 1e-5, "s={s}: {an} vs {fd}");
        }
    }
}

#[test]
fn cdf_matches_log_space_oracle() {
    for &(mu, nu) in &[(0.25, 1.01), (0.4, 3.0)] {
        for i in 1..100 {
            let s = i as f64 / 100.0;
            assert!((cdf_dalog(s, mu, nu).unwrap() - oracle_cdf(s, mu, nu)).abs() < 1e-13);
        }
    }
}

/// Fits `γ·F(σ; μ, ν)` to 5000 noisy observations by minibatch passes.
#[test]
fn fit_recovers_known_shape() {
    let (mu, nu, gamma) = (0.4, 3.0, 1.5);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let obs: Vec<(f64, f64)> = (0..5000)
        .map(|_| {
            let s: f64 = rng.random_range(1e-4..1.0 - 1e-4);
            (s, (gamma * oracle_cdf(s, mu, nu) + noise.sample(&mut rng)).max(0.0))
        })
        .collect();
    let mut p = ScheduleParams::initial(0.0, 1.0).unwrap();
    for _ in 0..400 {
        for chunk in obs.chunks(250) {
            p.fit_step_normalized(chunk, FIT_LR).unwrap();
        }
    }
    assert!((p.mu() - mu).abs() <= 0.02, "mu {}", p.mu());
    assert!((p.nu() - nu).abs() <= 0.3, "nu {}", p.nu());
    assert!((p.gamma() - gamma).abs() <= 0.05, "gamma {}", p.gamma());
}

proptest! {
    #[test]
    fn cdf_is_monotone_and_bounded(mu in 0.01f64..0.99, nu in 1.0001f64..10.0, a in 1e-6f64..1.0, b in 1e-6f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi < 1.0);
        let fl = cdf_dalog(lo, mu, nu).unwrap();
        let fh = cdf_dalog(hi, mu, nu).unwrap();
        prop_assert!((0.0..=1.0).contains(&fl) && (0.0..=1.0).contains(&fh));
        prop_assert!(fl <= fh);
        prop_assert!(pdf_dalog(lo, mu, nu).unwrap() >= 0.0);
    }

    #[test]
    fn sigma_of_t_is_monotone_within_bounds(mu in 0.01f64..0.99, nu in 1.0001f64..10.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let p = ScheduleParams::new(mu, nu, 1.0, 0.0, 80.0).unwrap();
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let (a, b) = (p.sigma_of_t(lo), p.sigma_of_t(hi));
        prop_assert!((0.0..=80.0).contains(&a) && (0.0..=80.0).contains(&b));
        prop_assert!(a <= b);
    }

    #[test]
    fn median_sits_at_mu(mu in 0.01f64..0.99, nu in 1.0001f64..10.0) {
        prop_assert!((quantile_dalog(0.5, mu, nu).unwrap() - mu).abs() < 1e-12);
    }
}
