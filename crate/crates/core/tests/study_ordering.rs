use grou::benchmark::{monte_carlo_study, ModelKind, StudyConfig};

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Two Monte Carlo standard errors of the paired per-path difference.
fn overlap(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    2.0 * (var / n).sqrt()
}

#[test]
fn dir_acc_ranks_grou_over_gnar_over_var_with_large_jumps() {
    let cfg = StudyConfig::predictive(10.0, 200, 5).unwrap();
    let table = monte_carlo_study(&cfg).unwrap();
    let col = |kind: ModelKind| -> Vec<f64> {
        let i = table.rows.iter().position(|r| r.model == kind).unwrap();
        table.per_path.iter().map(|p| p[i].dir_acc).collect()
    };
    let (grou, gnar, var) = (col(ModelKind::Grou), col(ModelKind::Gnar), col(ModelKind::Var));
    for (hi, lo, names) in [(&grou, &gnar, "grOU > GNAR"), (&gnar, &var, "GNAR > VAR")] {
        let gap = median(hi.clone()) - median(lo.clone());
        assert!(gap > -overlap(hi, lo), "{names}: median gap {gap:.4}");
    }
}
