#![allow(clippy::needless_range_loop)]

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use covreg::data::{pooled_matrix, project_response, sample_covariance, Projection};
use covreg::estimate::{
    beta_step, cross_validate_lambda, dfd, fit, gamma_step, objective, select_components, universal_lambda, Coefficients, PenaltySpec, ProjectedGlm,
};
use covreg::infer::{ij_variance, low_dim_refit, multi_split, select_support, split_average, split_sample, SplitPlan};
use covreg::sim::{generate_dataset, ScenarioSpec, SignalComponent};
use covreg::{FitConfig, LambdaChoice, Matrix};

use common::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

#[test]
fn sample_covariance_matches_outer_product_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let raw = random_raw(&mut rng, 2, 5, 1, (50, 50));
    let oracle = raw.sample_covs();
    let got = sample_covariance(&raw.dataset().subjects()[0]);
    for a in 0..5 {
        for b in 0..5 {
            assert!((got.s[(a, b)] - oracle[0][a][b]).abs() <= 1e-12);
        }
    }
    assert_eq!(got.weight, 50);
}

#[test]
fn pooled_matrix_matches_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let raw = random_raw(&mut rng, 7, 4, 2, (10, 40));
    let covs = raw.sample_covs();
    let w = raw.weights();
    let total: f64 = w.iter().sum();
    let h = pooled_matrix(&raw.dataset()).h;
    for a in 0..4 {
        for b in 0..4 {
            let oracle: f64 = covs.iter().zip(&w).map(|(s, t)| t * s[a][b]).sum::<f64>() / total;
            assert!((h[(a, b)] - oracle).abs() <= 1e-12);
        }
    }
}

#[test]
fn projected_response_equals_scaled_quadratic_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw = random_raw(&mut rng, 5, 3, 1, (5, 30));
    let data = raw.dataset();
    let gamma = random_unit(&mut rng, 3);
    let covs = raw.sample_covs();
    for (i, s) in data.subjects().iter().enumerate() {
        let z = project_response(s, &Projection::new(gamma.clone()));
        let g = Projection::new(gamma.clone());
        let oracle = raw.weights()[i] * quad(&covs[i], g.as_slice());
        assert!(rel(z, oracle) <= 1e-10);
    }
}

#[test]
fn objective_matches_literal_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let raw = random_raw(&mut rng, 6, 3, 4, (5, 20));
        let gamma = random_unit(&mut rng, 3);
        let beta: Vec<f64> = (0..4).map(|_| 0.3 * normal(&mut rng)).collect();
        let lambda = rng.gen_range(0.0..2.0);
        let got = objective(
            &raw.dataset().moments(),
            &Coefficients::new(beta.clone()),
            &Projection::new(gamma.clone()),
            &PenaltySpec::lasso(lambda),
        )
        .unwrap();
        let oracle = literal_objective(&raw.x, &raw.weights(), &raw.projected(&gamma), &beta, lambda);
        assert!(rel(got, oracle) <= 1e-12, "{got} vs {oracle}");
    }
}

#[test]
fn beta_step_matches_grid_search_for_two_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let raw = random_raw(&mut rng, 20, 2, 2, (20, 60));
    let gamma = random_unit(&mut rng, 2);
    let (w, z) = (raw.weights(), raw.projected(&gamma));
    let got = beta_step(
        &raw.dataset().moments(),
        &Projection::new(gamma.clone()),
        &PenaltySpec::lasso(0.1),
        &Coefficients::zeros(2),
        1e-10,
    )
    .unwrap();
    let center = [(z.iter().sum::<f64>() / w.iter().sum::<f64>()).ln(), 0.0];
    let oracle = grid_minimize(
        |b| literal_objective(&raw.x, &w, &z, b, 0.1),
        &center,
        &[(3.0, 0.01), (0.05, 1e-3), (2e-3, 1e-5)],
    );
    for j in 0..2 {
        assert!((got.beta[j] - oracle[j]).abs() <= 5e-3);
    }
}

#[test]
fn low_dim_refit_matches_grid_search_for_three_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let raw = random_raw(&mut rng, 30, 2, 3, (30, 60));
    let gamma = random_unit(&mut rng, 2);
    let (w, z) = (raw.weights(), raw.projected(&gamma));
    let got = low_dim_refit(&raw.dataset().moments(), &Projection::new(gamma.clone()), &[0, 1, 2], 1e-10).unwrap();
    let center = [(z.iter().sum::<f64>() / w.iter().sum::<f64>()).ln(), 0.0, 0.0];
    let oracle = grid_minimize(
        |b| literal_objective(&raw.x, &w, &z, b, 0.0),
        &center,
        &[(1.5, 0.03), (0.04, 1e-3), (2e-3, 1e-4)],
    );
    for j in 0..3 {
        assert!((got[j] - oracle[j]).abs() <= 5e-3, "{got:?} vs {oracle:?}");
    }
}

#[test]
fn low_dim_refit_equals_unpenalized_beta_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let raw = random_raw(&mut rng, 25, 3, 3, (20, 40));
    let gamma = Projection::new(random_unit(&mut rng, 3));
    let m = raw.dataset().moments();
    let refit = low_dim_refit(&m, &gamma, &[0, 1, 2], 1e-12).unwrap();
    let full = beta_step(&m, &gamma, &PenaltySpec::lasso(0.0), &Coefficients::zeros(3), 1e-12).unwrap();
    for j in 0..3 {
        assert!((refit[j] - full.beta[j]).abs() <= 1e-8);
    }
}

#[test]
fn gamma_step_attains_random_search_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let raw = random_raw(&mut rng, 6, 5, 2, (20, 40));
    let beta = vec![0.2, -0.4];
    let covs = raw.sample_covs();
    let w = raw.weights();
    let total: f64 = w.iter().sum();
    let mut a = vec![vec![0.0; 5]; 5];
    let mut h = vec![vec![0.0; 5]; 5];
    for i in 0..6 {
        let eta = raw.x[i][0] * beta[0] + raw.x[i][1] * beta[1];
        for r in 0..5 {
            for c in 0..5 {
                a[r][c] += 0.5 * w[i] * (-eta).exp() * covs[i][r][c];
                h[r][c] += w[i] * covs[i][r][c] / total;
            }
        }
    }
    let g = gamma_step(&raw.dataset().moments(), &Coefficients::new(beta), &[]).unwrap();
    assert!((quad(&h, g.as_slice()) - 1.0).abs() <= 1e-8);
    let oracle = random_search_min(&mut rng, &a, &h, 100_000);
    assert!(quad(&a, g.as_slice()) <= oracle + 1e-6);
}

#[test]
fn deflated_gamma_steps_are_h_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let raw = random_raw(&mut rng, 8, 4, 2, (20, 40));
    let m = raw.dataset().moments();
    let beta = Coefficients::new(vec![0.1, 0.3]);
    let mut prior: Vec<Projection<f64>> = Vec::new();
    for _ in 0..3 {
        let g = gamma_step(&m, &beta, &prior).unwrap();
        assert!((m.pooled().quad_form(g.as_slice()) - 1.0).abs() <= 1e-8);
        for p in &prior {
            assert!(m.pooled().bilinear(p.as_slice(), g.as_slice()).abs() <= 1e-6);
        }
        prior.push(g);
    }
}

/// `prod_i (det diag(G'S_iG) / det(G'S_iG))^(T_i / sum T)` for two columns.
fn literal_dfd(covs: &[Vec<Vec<f64>>], w: &[f64], g1: &[f64], g2: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let bil = |s: &Vec<Vec<f64>>, u: &[f64], v: &[f64]| {
        let mut acc = 0.0;
        for a in 0..u.len() {
            for b in 0..v.len() {
                acc += u[a] * s[a][b] * v[b];
            }
        }
        acc
    };
    let mut prod = 1.0;
    for (s, t) in covs.iter().zip(w) {
        let (a, b, c) = (bil(s, g1, g1), bil(s, g1, g2), bil(s, g2, g2));
        prod *= (a * c / (a * c - b * b)).powf(t / total);
    }
    prod
}

#[test]
fn dfd_matches_literal_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let raw = random_raw(&mut rng, 3, 4, 1, (10, 30));
    let g1 = random_unit(&mut rng, 4);
    let g2 = random_unit(&mut rng, 4);
    let got = dfd(
        &raw.dataset().moments(),
        &[Projection::new(g1.clone()), Projection::new(g2.clone())],
    )
    .unwrap();
    let oracle = literal_dfd(&raw.sample_covs(), &raw.weights(), &g1, &g2);
    assert!(rel(got, oracle) <= 1e-10, "{got} vs {oracle}");
    let single = dfd(&raw.dataset().moments(), &[Projection::new(g1)]).unwrap();
    assert!((single - 1.0).abs() <= 1e-15);
}

#[test]
fn dfd_is_one_for_a_diagonalizing_basis() {
    let p = 3;
    let covs: Vec<Matrix> = [[1.0, 2.0, 3.0], [0.5, 4.0, 1.0]].iter().map(|d| Matrix::from_diag(d)).collect();
    let m = covreg::data::Moments::from_parts(covs, vec![10.0, 20.0], Matrix::from_rows(&[vec![1.0], vec![1.0]]));
    let basis: Vec<Projection<f64>> = (0..p)
        .map(|k| Projection::new((0..p).map(|j| if j == k { 1.0 } else { 0.0 }).collect()))
        .collect();
    assert!((dfd(&m, &basis).unwrap() - 1.0).abs() <= 1e-12);
}

fn small_signal_spec() -> ScenarioSpec {
    ScenarioSpec {
        n: 100,
        t_obs: 100,
        p: 3,
        q: 4,
        components: vec![SignalComponent {
            name: "C2".into(),
            column: 1,
            active: vec![(1, 1.5), (2, -1.0)],
        }],
        targets: vec![1, 2],
        intercept_range: (-1.0, 1.0),
        ..ScenarioSpec::default()
    }
}

#[test]
fn fit_recovers_a_single_component() {
    let spec = small_signal_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (data, truth) = generate_dataset(&spec, &mut rng).unwrap();
    let m = data.moments();
    let set = select_components(
        &m,
        &PenaltySpec::lasso(0.0),
        &LambdaChoice::Fixed(0.0),
        &FitConfig::default(),
        2.0,
        3,
    )
    .unwrap();
    let g_true = &truth.components[0].gamma;
    let best = set
        .components
        .iter()
        .map(|c| {
            let u = c.gamma.unit();
            u.iter().zip(g_true).map(|(a, b)| a * b).sum::<f64>().abs()
        })
        .fold(0.0, f64::max);
    assert!(best >= 0.99, "{best}");
}

#[test]
fn more_restarts_never_worsen_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let raw = random_raw(&mut rng, 30, 3, 3, (20, 40));
    let m = raw.dataset().moments();
    let penalty = PenaltySpec::lasso(0.5);
    let one = fit(&m, &penalty, &FitConfig { restarts: 1, rng_seed: 4, ..FitConfig::default() }).unwrap();
    let five = fit(&m, &penalty, &FitConfig { restarts: 5, rng_seed: 4, ..FitConfig::default() }).unwrap();
    assert!(five.final_objective() <= one.final_objective());
}

#[test]
fn selected_dfd_trace_matches_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let raw = random_raw(&mut rng, 20, 4, 2, (20, 40));
    let m = raw.dataset().moments();
    let set = select_components(
        &m,
        &PenaltySpec::lasso(0.0),
        &LambdaChoice::Fixed(0.2),
        &FitConfig { restarts: 2, ..FitConfig::default() },
        10.0,
        4,
    )
    .unwrap();
    let projections = set.projections();
    for k in 0..projections.len() {
        let again = dfd(&m, &projections[..=k]).unwrap();
        assert!((again - set.dfd_values[k]).abs() <= 1e-12);
    }
    let tight = select_components(
        &m,
        &PenaltySpec::lasso(0.0),
        &LambdaChoice::Fixed(0.2),
        &FitConfig { restarts: 2, ..FitConfig::default() },
        1.0 + 1e-12,
        4,
    )
    .unwrap();
    assert_eq!(tight.components.len(), 1);
}

#[test]
fn split_membership_frequency_is_uniform() {
    let n = 10;
    let plan = SplitPlan::new(n, 10_000, 21);
    let mut counts = vec![0usize; n];
    for b in 0..plan.b_splits {
        let (c1, c2) = split_sample(n, &plan, b, 0);
        assert_eq!(c1.len() + c2.len(), n);
        for i in c2 {
            counts[i] += 1;
        }
    }
    let expected = plan.n2 as f64 / n as f64;
    for c in counts {
        assert!((c as f64 / plan.b_splits as f64 - expected).abs() <= 0.02);
    }
}

#[test]
fn selection_screens_the_true_support() {
    let spec = ScenarioSpec::preset("q200_small").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (data, truth) = generate_dataset(&spec, &mut rng).unwrap();
    let m = data.moments();
    let c2 = &truth.components[0];
    let gamma = Projection::new(c2.gamma.clone()).normalized(m.pooled()).unwrap();
    let penalty = PenaltySpec::lasso(0.0);
    let glm = ProjectedGlm::from_moments(&m, gamma.as_slice());
    let pilot = universal_lambda(m.design(), m.weights(), &penalty);
    let lambda = cross_validate_lambda(&glm, &penalty, 5, 20, 0.01, pilot, 3, 1e-8).unwrap().chosen;
    let plan = SplitPlan::new(data.n(), 20, 3);
    let mut hits = 0;
    for b in 0..plan.b_splits {
        let (c1, _) = split_sample(data.n(), &plan, b, 0);
        let sub = m.subset(&c1);
        let support = select_support(&sub, &gamma, &penalty.with_lambda(lambda), 1e-8).unwrap();
        if [10, 20, 30].iter().all(|j| support.contains(j)) {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.8 * plan.b_splits as f64, "{hits}/{}", plan.b_splits);
}

#[test]
fn shuffled_membership_removes_the_variance_signal() {
    let spec = small_signal_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (data, truth) = generate_dataset(&spec, &mut rng).unwrap();
    let m = data.moments();
    let gamma = Projection::new(truth.components[0].gamma.clone()).normalized(m.pooled()).unwrap();
    let plan = SplitPlan::new(data.n(), 100, 5);
    let splits = multi_split(&m, &gamma, &PenaltySpec::lasso(1.0), &plan, 1e-8).unwrap();
    let v = ij_variance(&splits.results, &splits.beta_hat, &plan).unwrap().raw;
    for j in [1, 2] {
        let mut acc = 0.0;
        for _ in 0..100 {
            let mut shuffled = splits.results.clone();
            let memberships: Vec<Vec<bool>> = shuffled.iter().map(|r| r.membership.clone()).collect();
            let mut order: Vec<usize> = (0..shuffled.len()).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            for (r, &o) in shuffled.iter_mut().zip(&order) {
                r.membership = memberships[o].clone();
            }
            acc += ij_variance(&shuffled, &split_average(&shuffled), &plan).unwrap().raw[j];
        }
        let mean = acc / 100.0;
        assert!(mean <= 0.1 * v[j], "coordinate {j}: shuffled mean {mean} vs {}", v[j]);
    }
}
