//! Scratch diagnostic for the second-stage cross term orientation.

use logebp::fit::{fit_ml, FitOptions};
use logebp::model::CovOps;
use logebp::predict::best_predict_unit;
use logebp::second_order::SecondOrder;
use logebp::sim::{simulate_population, SimDesign};
use logebp::{PopulationLayout, Theta};
use nalgebra::DVector;

fn sample_ys(layout: &PopulationLayout, ys: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layout.n());
    for (d, area) in layout.areas().iter().enumerate() {
        out.extend_from_slice(&ys[d][..area.n()]);
    }
    out
}

fn main() {
    let beta = DVector::from_column_slice(&[0.5, 0.2]);
    let th = Theta::new(0.25, 0.5).unwrap();
    for (seed, reps) in [(19u64, 100_000usize), (101, 50_000)] {
        let design =
            SimDesign::uniform_recipe(&vec![(20, 4); 50], beta.clone(), th, 1, seed).unwrap();
        let layout = &design.layout;
        let so = SecondOrder::new(layout, th).unwrap();
        let ops0 = CovOps::new(layout, th).unwrap();
        let opts = FitOptions::default();
        let (d, i, j) = (0usize, 0usize, 1usize);
        let n_d = layout.areas()[d].n();

        let a_m2 = so.m2(&beta, d, i, j).unwrap();
        let a_m3_ij = so.m3(&beta, d, i, j).unwrap();
        let a_m3_ji = so.m3(&beta, d, j, i).unwrap();
        println!("seed {seed}: analytic m2={a_m2:.5} m3_ij={a_m3_ij:.5} m3_ji={a_m3_ji:.5} sum={:.5}", a_m3_ij + a_m3_ji);

        let mut s_m2 = Vec::with_capacity(reps);
        let mut s_ij = Vec::with_capacity(reps);
        let mut s_ji = Vec::with_capacity(reps);
        let mut s_sum = Vec::with_capacity(reps);
        let mut failures = 0usize;
        for b in 0..reps {
            let pop = simulate_population(&design, b as u64);
            let ys = sample_ys(layout, &pop.ys);
            let trial = layout.with_responses(&ys).unwrap();
            let fit = match fit_ml(&trial, &opts) {
                Ok(f) => f,
                Err(_) => {
                    failures += 1;
                    continue;
                }
            };
            let wls = ops0.wls_beta(&ys);
            let e1i = best_predict_unit(&trial, &wls, &th, d, i).unwrap().w_tilde;
            let e1j = best_predict_unit(&trial, &wls, &th, d, j).unwrap().w_tilde;
            let e2i = best_predict_unit(&trial, &fit.beta_hat, &fit.theta_hat, d, i)
                .unwrap()
                .w_tilde;
            let e2j = best_predict_unit(&trial, &fit.beta_hat, &fit.theta_hat, d, j)
                .unwrap()
                .w_tilde;
            let wi = pop.ws[d][n_d + i];
            let wj = pop.ws[d][n_d + j];
            s_m2.push((e2i - e1i) * (e2j - e1j));
            s_ij.push((e2i - e1i) * (e1j - wj));
            s_ji.push((e2j - e1j) * (e1i - wi));
            s_sum.push((e2i - e1i) * (e1j - wj) + (e2j - e1j) * (e1i - wi));
        }
        let stat = |xs: &[f64]| {
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
            (m, (v / n).sqrt())
        };
        let (m2m, m2se) = stat(&s_m2);
        let (ijm, ijse) = stat(&s_ij);
        let (jim, jise) = stat(&s_ji);
        let (summ, sumse) = stat(&s_sum);
        println!(
            "  R={reps} fail={failures}\n  mc m2    = {m2m:.5} +- {:.5} (z vs analytic {:+.2})\n  mc m3_ij = {ijm:.5} +- {:.5} (z {:+.2})\n  mc m3_ji = {jim:.5} +- {:.5} (z {:+.2})\n  mc sum   = {summ:.5} +- {:.5} (z {:+.2})",
            3.0 * m2se,
            (m2m - a_m2) / m2se,
            3.0 * ijse,
            (ijm - a_m3_ij) / ijse,
            3.0 * jise,
            (jim - a_m3_ji) / jise,
            3.0 * sumse,
            (summ - (a_m3_ij + a_m3_ji)) / sumse,
        );
    }
}
