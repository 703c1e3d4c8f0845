use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use riskattrib::attribution::{
    prob_positive_cctr, run_mc, summarize, tail_risk, var_esf, with_thread_pool, PortfolioWeights,
};
use riskattrib::ingest::load_returns;
use riskattrib::matstat::{sample_covariance, RngStream, SymMatrix};
use riskattrib::posterior::{posterior_from_scatter, PosteriorParams, PriorSpec};
use riskattrib::validate::{normal_tail_oracle, random_spd, NORMAL_ESF_95, NORMAL_VAR_95};

fn fixture_posterior() -> PosteriorParams {
    let panel = load_returns(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/indices_n3.csv")).unwrap();
    let s = sample_covariance(&panel).unwrap();
    posterior_from_scatter(&s, panel.n_obs(), &PriorSpec::default()).unwrap()
}

#[test]
fn output_independent_of_thread_count() {
    let post = fixture_posterior();
    let w = PortfolioWeights::normalized(vec![5.0, 5.0, 20.0, 40.0, 30.0]).unwrap();
    let runs: Vec<_> = [1, 2, 8]
        .into_iter()
        .map(|t| with_thread_pool(t, || run_mc(&post, &w, 3000, 42)).unwrap().unwrap())
        .collect();
    for r in &runs[1..] {
        assert_eq!(r, &runs[0]);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(r.sigma_p()), bits(runs[0].sigma_p()));
    }
}

#[test]
fn contributions_add_up_in_every_replication() {
    let post = fixture_posterior();
    let w = PortfolioWeights::normalized(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let s = run_mc(&post, &w, 2000, 1).unwrap();
    for i in 0..s.n_sims() {
        let total: f64 = s.cctr_row(i).iter().sum();
        assert!((total - s.sigma_p()[i]).abs() <= 1e-10 * s.sigma_p()[i]);
        assert!(s.sigma_p()[i] > 0.0);
    }
}

#[test]
fn scalar_posterior_contributions_always_positive() {
    let post = PosteriorParams::from_parts(5.0, SymMatrix::from_diagonal(&[3.0])).unwrap();
    let s = run_mc(&post, &PortfolioWeights::equal(1), 10_000, 3).unwrap();
    assert_eq!(prob_positive_cctr(&s), vec![1.0]);
}

#[test]
fn volatility_mean_stable_across_seeds() {
    let post = PosteriorParams::from_parts(30.5, SymMatrix::from_diagonal(&[29.0 * 0.04, 29.0 * 0.01])).unwrap();
    let w = PortfolioWeights::equal(2);
    let mean = |seed| {
        let s = run_mc(&post, &w, 10_000, seed).unwrap();
        s.sigma_p().iter().sum::<f64>() / s.n_sims() as f64
    };
    let (a, b) = (mean(10), mean(11));
    assert!(((a - b) / a).abs() < 0.02, "{a} vs {b}");
}

#[test]
fn sign_probabilities_on_small_sample_fixture() {
    let post = fixture_posterior();
    let w = PortfolioWeights::normalized(vec![5.0, 5.0, 20.0, 40.0, 30.0]).unwrap();
    let n = 10_000;
    let s = run_mc(&post, &w, n, 0).unwrap();
    for q in prob_positive_cctr(&s) {
        assert!((0.0..=1.0).contains(&q));
        assert!((q * (1.0 - q) / n as f64).sqrt() <= 0.005);
    }
}

#[test]
fn normal_percentile_interval() {
    let mut rng = RngStream::new(12, 0).rng();
    let draws: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let s = summarize(&draws).unwrap();
    assert!((s.ci_lo + 1.959964).abs() < 0.02, "{}", s.ci_lo);
    assert!((s.ci_hi - 1.959964).abs() < 0.02, "{}", s.ci_hi);
}

#[test]
fn tail_risk_of_constant_returns() {
    let t = var_esf(&[-0.03; 50], 0.95).unwrap();
    assert!((t.var - 0.03).abs() < 1e-15);
    assert!((t.esf - 0.03).abs() < 1e-15);
}

#[test]
fn tail_risk_of_standard_normal_predictive() {
    let t = normal_tail_oracle(1_000_000, 0.95, 8).unwrap();
    assert!(((t.var - NORMAL_VAR_95) / NORMAL_VAR_95).abs() < 0.02, "{}", t.var);
    assert!(((t.esf - NORMAL_ESF_95) / NORMAL_ESF_95).abs() < 0.02, "{}", t.esf);
}

#[test]
fn shortfall_never_below_var() {
    let mut rng = RngStream::new(13, 0).rng();
    for k in 0..100 {
        let p = rng.random_range(1..6);
        let scale = random_spd(p, &mut rng);
        let nu = p as f64 + rng.random_range(0.5..20.0);
        let post = PosteriorParams::from_parts(nu, scale).unwrap();
        let raw: Vec<f64> = (0..p).map(|_| rng.random_range(0.01..1.0)).collect();
        let w = PortfolioWeights::normalized(raw).unwrap();
        let mu: Vec<f64> = (0..p).map(|_| rng.random_range(-0.1..0.1)).collect();
        let level = rng.random_range(0.6..0.99);
        let t = tail_risk(&post, &w, &mu, 500, level, k).unwrap();
        assert!(t.esf >= t.var, "{t:?}");
    }
}
