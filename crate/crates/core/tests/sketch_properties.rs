use fimsketch_core::rng::derive_seed;
use fimsketch_core::{
    concentration_trial, frobenius_error_bound, full_fim, sample_size_bound, sketch_product, sketch_rows, DensityField,
    DesignBox, Grid, Matrix, Preset, Quasimatrix64, SchrodingerProblem64, SourceSpec,
};

/// Deterministic 60 x 3 row set with uneven row norms.
fn small_source() -> Quasimatrix64 {
    let n = 60;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let t = i as f64;
            let scale = 1.0 + 3.0 * (0.37 * t).sin().abs();
            vec![scale * (1.3 * t).cos(), scale * (0.7 * t + 0.4).sin(), 0.5 + (2.1 * t).cos()]
        })
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let points = (0..n).map(|i| vec![i as f64]).collect();
    Quasimatrix64::uniform(points, Matrix::from_rows(&refs), DesignBox::cube(1, 0.0, (n - 1) as f64).unwrap()).unwrap()
}

fn errors(q: &Quasimatrix64, d: &DensityField<f64>, c: usize, trials: u64, tag: u64) -> Vec<f64> {
    let exact = full_fim(q);
    (0..trials)
        .map(|t| sketch_product(&sketch_rows(q, d, c, derive_seed(tag, t)).unwrap()).frobenius_deviation(&exact))
        .collect()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn sketch_mean_error_decays_at_root_rate() {
    let q = small_source();
    let d = q.optimal_density().unwrap();
    let ms = [100usize, 1_000, 10_000];
    let means: Vec<f64> = ms
        .iter()
        .map(|&m| {
            let e = errors(&q, &d, m, 100, 0x51);
            (e.iter().sum::<f64>() / e.len() as f64).ln()
        })
        .collect();
    let s = slope(&ms.map(|m| (m as f64).ln()), &means);
    assert!((s + 0.5).abs() <= 0.15, "slope {s}");
}

#[test]
fn failure_rate_falls_along_a_sample_size_ladder() {
    let q = small_source();
    let d = q.optimal_density().unwrap();
    // threshold at the median error of the smallest sketch
    let mut first = errors(&q, &d, 8, 1000, 0x52);
    first.sort_by(f64::total_cmp);
    let threshold = first[500];
    let rates: Vec<f64> = [8usize, 16, 32, 64, 128]
        .iter()
        .map(|&c| errors(&q, &d, c, 1000, 0x52).iter().filter(|&&e| e > threshold).count() as f64 / 1000.0)
        .collect();
    for w in rates.windows(2) {
        assert!(w[1] <= w[0] + 0.02, "{rates:?}");
    }
    assert!(rates[0] > 0.4 && *rates.last().unwrap() < 0.01, "{rates:?}");
}

#[test]
fn concentration_bound_holds_at_its_sample_size() {
    let q = small_source();
    let d = q.optimal_density().unwrap();
    let fro = q.frobenius_sq();
    let eps = 0.25 * fro;
    let c = sample_size_bound(fro, 1.0, eps, 0.1).unwrap() as usize;
    assert!(frobenius_error_bound(fro, 1.0, 0.1, c).unwrap() <= eps);
    assert!(concentration_trial(&q, &d, 1.0, c, 0.1, 1000, 0x53).unwrap() <= 0.1);
    // a hundred times the bound sample size never fails
    let errs = errors(&q, &d, 100 * c, 1000, 0x54);
    assert!(errs.iter().all(|&e| e <= eps), "{}", errs.iter().cloned().fold(0.0, f64::max));
}

#[test]
fn system_c_density_is_spread_out() {
    let q = SchrodingerProblem64::new(Grid::new(30).unwrap(), Preset::SystemC.coeffs(), SourceSpec::Constant(1e4))
        .unwrap()
        .full_quasimatrix()
        .unwrap();
    let d = q.optimal_density().unwrap();
    let total: f64 = d.values().iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(d.max_value() <= 0.0031, "{}", d.max_value());
}

fn scaled_density(preset: Preset, alpha: f64) -> DensityField<f64> {
    let coeffs = preset.coeffs::<f64>().scaled(alpha);
    SchrodingerProblem64::new(Grid::new(30).unwrap(), coeffs, SourceSpec::Constant(1e4))
        .unwrap()
        .full_quasimatrix()
        .unwrap()
        .optimal_density()
        .unwrap()
}

fn argmax(d: &DensityField<f64>) -> Vec<f64> {
    let i = (0..d.len()).max_by(|&a, &b| d.values()[a].total_cmp(&d.values()[b])).unwrap();
    d.points()[i].clone()
}

fn second_moment(d: &DensityField<f64>) -> f64 {
    d.points().iter().zip(d.values()).map(|(p, v)| v * (p[0] * p[0] + p[1] * p[1])).sum()
}

fn total_variation(a: &DensityField<f64>, b: &DensityField<f64>) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
}

#[test]
fn rescaling_system_c_moves_the_density_peak() {
    let (low, high) = (scaled_density(Preset::SystemC, 0.1), scaled_density(Preset::SystemC, 10.0));
    let (a, b) = (argmax(&low), argmax(&high));
    let shift = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    assert!(shift > 0.5, "{a:?} vs {b:?}");
    assert!(total_variation(&low, &high) > 0.5);
}

#[test]
fn rescaling_system_d_spreads_the_density() {
    // a constant potential keeps the peak at the centre by symmetry
    let (low, high) = (scaled_density(Preset::SystemD, 0.1), scaled_density(Preset::SystemD, 10.0));
    assert_eq!(argmax(&low), vec![0.0, 0.0]);
    assert!(total_variation(&low, &high) > 0.2);
    assert!(second_moment(&high) > 1.5 * second_moment(&low));
}
