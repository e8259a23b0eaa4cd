mod common;

use rand::Rng;
use common::{luminance_model, pmi_closed_form as closed_form, symbol};
use stseg::pmi::pmi_affinity;

#[test]
fn two_symbol_toy_matches_the_closed_form() {
    let table = vec![0.45, 0.05, 0.05, 0.45];
    let model = luminance_model(1.25, 2, table);
    let within = pmi_affinity(&model, &symbol(0, 2), &symbol(0, 2));
    let across = pmi_affinity(&model, &symbol(0, 2), &symbol(1, 2));
    assert!((within - 0.45f64.powf(1.25) / 0.25).abs() <= 1e-6);
    assert!((across - 0.05f64.powf(1.25) / 0.25).abs() <= 1e-6);
}

#[test]
fn random_discrete_tables_match_the_closed_form_on_symbols() {
    let mut rng = common::rng(17);
    for _ in 0..50 {
        let size = rng.random_range(2..=6);
        let rho = rng.random_range(0.5..2.0);
        let table: Vec<f64> = (0..size * size).map(|_| rng.random_range(0.01..1.0)).collect();
        let model = luminance_model(rho, size, table.clone());
        for i in 0..size {
            for j in 0..size {
                let got = pmi_affinity(&model, &symbol(i, size), &symbol(j, size));
                let want = closed_form(&table, size, rho, i, j);
                assert!((got - want).abs() <= 1e-6 * want.max(1.0), "{got} vs {want}");
            }
        }
    }
}

#[test]
fn independent_table_has_zero_pmi_at_unit_rho() {
    let mut rng = common::rng(4);
    let size = 16;
    let marginal: Vec<f64> = (0..size).map(|_| rng.random_range(0.2..1.0)).collect();
    let table: Vec<f64> = (0..size * size).map(|k| marginal[k / size] * marginal[k % size]).collect();
    let model = luminance_model(1.0, size, table);
    for i in 0..size {
        for j in 0..size {
            assert!(model.pmi(&symbol(i, size), &symbol(j, size)).abs() <= 1e-12);
        }
    }
    // bilinear interpolation of a separable table stays separable
    for _ in 0..200 {
        let a = [rng.random_range(0.0..1.0), 0.5, 0.5, 0.0];
        let b = [rng.random_range(0.0..1.0), 0.5, 0.5, 0.0];
        assert!(model.pmi(&a, &b).abs() <= 1e-3, "pmi {}", model.pmi(&a, &b));
    }
}

#[test]
fn affinity_is_symmetric_and_decreasing_in_rho() {
    let table = vec![0.3, 0.1, 0.05, 0.1, 0.2, 0.05, 0.05, 0.05, 0.1];
    let base = luminance_model(1.0, 3, table);
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = (symbol(i, 3), symbol(j, 3));
            assert_eq!(pmi_affinity(&base, &a, &b).to_bits(), pmi_affinity(&base, &b, &a).to_bits());
            let mut last = f64::INFINITY;
            for rho in [0.75, 1.0, 1.25, 1.5] {
                let v = pmi_affinity(&base.with_rho(rho), &a, &b);
                assert!(v < last);
                last = v;
            }
        }
    }
}
