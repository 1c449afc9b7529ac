use proptest::prelude::*;
use sc_sparc::channels::ChannelSpec;
use sc_sparc::code_design::{DesignMatrix, SparcParams};
use sc_sparc::codec::{encode, g_in, gamp_decode, hard_decision, section_error_rate, Message};
use sc_sparc::numerics::{mc_expect, RngStream};
use sc_sparc::state_evolution::{eps_tau, run_se, SeOptions};

/// Sectionwise error of the denoiser on `e_1 + sqrt(tau) U`.
fn section_mse(u: &[f64], tau: f64) -> f64 {
    let r: Vec<f64> = u.iter().enumerate().map(|(i, &x)| if i == 0 { 1.0 } else { 0.0 } + tau.sqrt() * x).collect();
    let est = g_in(&r, tau).unwrap();
    est.iter().enumerate().map(|(i, &b)| (b - if i == 0 { 1.0 } else { 0.0 }).powi(2)).sum()
}

#[test]
fn section_error_probability_matches_denoiser_mse() {
    let root = RngStream::root(11);
    for (i, &m) in [2usize, 16, 64].iter().enumerate() {
        for (j, &tau) in [0.05, 0.2, 1.0].iter().enumerate() {
            let tag = (3 * i + j) as u64;
            let eps = eps_tau(tau, m, 100_000, root.derive(tag)).unwrap();
            let mse = mc_expect(|u| section_mse(u, tau), m, 100_000, root.derive(100 + tag)).unwrap();
            let combined = (eps.std_error.powi(2) + mse.std_error.powi(2)).sqrt();
            let gap = (1.0 - eps.mean - mse.mean).abs();
            assert!(gap <= 4.0 * combined, "M = {m}, tau = {tau}: 1 - eps = {}, mse = {}", 1.0 - eps.mean, mse.mean);
        }
    }
}

#[test]
fn encode_decode_round_trip_at_high_snr() {
    let channel = ChannelSpec::awgn(0.01).unwrap();
    let params = SparcParams::new(256, 16, 16, 1, 0.05, 0.5).unwrap();
    let w = params.base_matrix().unwrap();
    let root = RngStream::root(4);
    let a = DesignMatrix::sample(&params, &w, root.derive(0)).unwrap();
    let msg = Message::random(params.l, params.m, &root.derive(1));
    let beta = encode(&msg, &params).unwrap();
    let y = channel.transmit(&a.matvec(&beta).unwrap(), &root.derive(2));
    let se =
        run_se(&params, &w, &channel, &SeOptions { t_max: 20, stop_tol: 0.0, n_mc: 5000 }, root.derive(3)).unwrap();
    let run = gamp_decode(&a, &y, &channel, &params, &w, &beta, &se, se.iterations()).unwrap();
    let ser = section_error_rate(&run.decoded, &msg, &params.seeds().unwrap(), &params).unwrap();
    assert_eq!(ser.overall, 0.0, "{ser:?}");
}

#[test]
fn empirical_error_follows_state_evolution() {
    let channel = ChannelSpec::awgn(1.0).unwrap();
    let params = SparcParams::new(512, 32, 16, 1, 0.02, 0.2).unwrap();
    let w = params.base_matrix().unwrap();
    let root = RngStream::root(21);
    let iterations = 10;
    let se =
        run_se(&params, &w, &channel, &SeOptions { t_max: iterations, stop_tol: 0.0, n_mc: 20_000 }, root.derive(0))
            .unwrap();
    let trials = 4;
    let mut mean = vec![0.0; iterations];
    for trial in 0..trials {
        let s = root.derive(1).derive(trial);
        let a = DesignMatrix::sample(&params, &w, s.derive(0)).unwrap();
        let msg = Message::random(params.l, params.m, &s.derive(1));
        let beta = encode(&msg, &params).unwrap();
        let y = channel.transmit(&a.matvec(&beta).unwrap(), &s.derive(2));
        let run = gamp_decode(&a, &y, &channel, &params, &w, &beta, &se, iterations).unwrap();
        let last = run.records.last().unwrap().mse_empirical.unwrap();
        for (t, m) in mean.iter_mut().enumerate() {
            *m += run.records.get(t).map_or(last, |r| r.mse_empirical.unwrap()) / trials as f64;
        }
    }
    for (t, m) in mean.iter().enumerate() {
        let predicted = se.mean_psi(t + 1);
        assert!((m - predicted).abs() <= 0.05, "t = {t}: empirical {m}, state evolution {predicted}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn denoiser_output_is_a_distribution(
        r in prop::collection::vec(-50.0f64..50.0, 1..40),
        tau in 1e-4f64..10.0,
    ) {
        let est = g_in(&r, tau).unwrap();
        prop_assert!(est.iter().all(|&v| v >= 0.0 && v.is_finite()));
        prop_assert!((est.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // Largest input gets the largest weight.
        let argmax = hard_decision(&r, r.len()).indices[0];
        let top = est.iter().copied().fold(0.0, f64::max);
        prop_assert!((est[argmax] - top).abs() < 1e-12);
    }

    #[test]
    fn denoiser_ignores_a_common_shift(
        r in prop::collection::vec(-5.0f64..5.0, 2..20),
        shift in -100.0f64..100.0,
        tau in 0.01f64..5.0,
    ) {
        let shifted: Vec<f64> = r.iter().map(|x| x + shift).collect();
        let a = g_in(&r, tau).unwrap();
        let b = g_in(&shifted, tau).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn section_error_rate_counts_mismatches(
        wrong in prop::collection::vec(any::<bool>(), 64),
    ) {
        let params = SparcParams::with_n(64, 4, 16, 1, 0.0, 64).unwrap();
        let truth = Message::new(vec![0; 64], 4).unwrap();
        let decoded = Message::new(wrong.iter().map(|&w| usize::from(w)).collect(), 4).unwrap();
        let seeds = params.seeds().unwrap();
        let ser = section_error_rate(&decoded, &truth, &seeds, &params).unwrap();
        let count = wrong.iter().filter(|&&w| w).count();
        prop_assert!((ser.overall - count as f64 / 64.0).abs() < 1e-15);
        let free: Vec<usize> = (0..64).filter(|&s| !seeds.contains(params.block_of_section(s))).collect();
        let free_wrong = free.iter().filter(|&&s| wrong[s]).count();
        prop_assert!((ser.unseeded - free_wrong as f64 / free.len() as f64).abs() < 1e-15);
    }
}
