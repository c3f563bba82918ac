use std::io::Write;

use crate::error::{Error, Result};
use crate::matops::Matrix;
use crate::spca::support::greedy_assignment;

pub const CSV_HEADER: &str = "experiment,sweep_value,method,metric,value,stderr,runs";

/// One aggregated measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub experiment: String,
    pub sweep_value: f64,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub runs: usize,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.experiment, self.sweep_value, self.method, self.metric, self.value, self.stderr, self.runs
        )
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}

/// Sample mean and standard error (sample std / √n; zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Mean of `‖s_t − B·C·x_t‖²` over test columns.
pub fn j_rec_empirical(b: &Matrix, c: &Matrix, s_test: &Matrix, x_test: &Matrix) -> Result<f64> {
    let p = s_test.rows();
    if b.rows() != p || c.cols() != p || b.cols() != c.rows() || x_test.shape() != s_test.shape() {
        return Err(Error::ShapeMismatch(format!(
            "B {}x{}, C {}x{}, S {}x{}, X {}x{}",
            b.rows(),
            b.cols(),
            c.rows(),
            c.cols(),
            s_test.rows(),
            s_test.cols(),
            x_test.rows(),
            x_test.cols()
        )));
    }
    let recon = b.matmul(&c.matmul(x_test)?)?;
    Ok(s_test.sub(&recon)?.frobenius_norm_sq() / s_test.cols() as f64)
}

/// [`j_rec_empirical`] with `B = Cᵀ = u`.
pub fn j_rec_projection(u: &Matrix, s_test: &Matrix, x_test: &Matrix) -> Result<f64> {
    j_rec_empirical(u, &u.transpose(), s_test, x_test)
}

/// `‖|Ĉ| − |Uᵀ|‖_F²` after pairing each row of `c_hat` with its best-matching column of `u_true`.
pub fn est_mse_abs(c_hat: &Matrix, u_true: &Matrix) -> Result<f64> {
    if c_hat.cols() != u_true.rows() || u_true.cols() < c_hat.rows() {
        return Err(Error::ShapeMismatch(format!(
            "estimate {}x{} against reference {}x{}",
            c_hat.rows(),
            c_hat.cols(),
            u_true.rows(),
            u_true.cols()
        )));
    }
    let assignment = greedy_assignment(c_hat, u_true);
    let mut total = 0.0;
    for (rho, &k) in assignment.iter().enumerate() {
        for j in 0..c_hat.cols() {
            total += (c_hat.get(rho, j).abs() - u_true.get(j, k).abs()).powi(2);
        }
    }
    Ok(total)
}

/// PCA basis with each column zeroed off the true support of its matched column, then renormalized.
pub fn genie_pca(u_pca: &Matrix, u_true: &Matrix) -> Result<Matrix> {
    if u_pca.rows() != u_true.rows() || u_true.cols() < u_pca.cols() {
        return Err(Error::ShapeMismatch("genie reference is too small".into()));
    }
    let assignment = greedy_assignment(&u_pca.transpose(), u_true);
    let mut out = Matrix::zeros(u_pca.rows(), u_pca.cols());
    for (k, &m) in assignment.iter().enumerate() {
        let masked: Vec<f64> = (0..u_pca.rows())
            .map(|j| if u_true.get(j, m) == 0.0 { 0.0 } else { u_pca.get(j, k) })
            .collect();
        let norm = masked.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.set_col(k, &masked.iter().map(|v| v / norm).collect::<Vec<_>>());
        }
    }
    Ok(out)
}

/// Collects per-run values keyed by (method, metric) in first-seen order.
#[derive(Debug, Default)]
pub(crate) struct Tally {
    keys: Vec<(String, String)>,
    values: Vec<Vec<f64>>,
}

impl Tally {
    pub(crate) fn push(&mut self, method: &str, metric: &str, value: f64) {
        match self.keys.iter().position(|(a, b)| a == method && b == metric) {
            Some(i) => self.values[i].push(value),
            None => {
                self.keys.push((method.to_string(), metric.to_string()));
                self.values.push(vec![value]);
            }
        }
    }

    pub(crate) fn extend(&mut self, run: &[(String, &'static str, f64)]) {
        for (method, metric, value) in run {
            self.push(method, metric, *value);
        }
    }

    pub(crate) fn mean(&self, method: &str, metric: &str) -> Option<f64> {
        self.keys
            .iter()
            .position(|(a, b)| a == method && b == metric)
            .map(|i| mean_stderr(&self.values[i]).0)
    }

    pub(crate) fn rows(&self, experiment: &str, sweep_value: f64) -> Result<Vec<MetricsRow>> {
        self.keys
            .iter()
            .zip(&self.values)
            .map(|((method, metric), values)| {
                let (value, stderr) = mean_stderr(values);
                if !value.is_finite() || !stderr.is_finite() {
                    return Err(Error::NonFinite(format!("{method} {metric} at {sweep_value}")));
                }
                Ok(MetricsRow {
                    experiment: experiment.to_string(),
                    sweep_value,
                    method: method.clone(),
                    metric: metric.clone(),
                    value,
                    stderr,
                    runs: values.len(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gauss, seeded};

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed);
        Matrix::from_fn(rows, cols, |_, _| gauss(&mut rng))
    }

    #[test]
    fn zero_codec_gives_signal_energy() {
        let s = random(5, 40, 1);
        let j = j_rec_empirical(&Matrix::zeros(5, 2), &Matrix::zeros(2, 5), &s, &s).unwrap();
        let energy = s.frobenius_norm_sq() / 40.0;
        assert!((j - energy).abs() < 1e-12);
        assert!(j_rec_empirical(&Matrix::zeros(4, 2), &Matrix::zeros(2, 5), &s, &s).is_err());
    }

    #[test]
    fn est_mse_ignores_signs_and_row_order() {
        let u = Matrix::from_columns(&[vec![0.6, 0.8, 0.0], vec![0.0, 0.0, 1.0]]);
        let c = Matrix::from_rows(&[vec![0.0, 0.0, -1.0], vec![-0.6, 0.8, 0.0]]);
        assert!(est_mse_abs(&c, &u).unwrap() < 1e-15);
        assert!((est_mse_abs(&Matrix::zeros(2, 3), &u).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn est_mse_matches_direct_sum() {
        let u = random(6, 3, 2);
        let c = random(3, 6, 3);
        let assignment = greedy_assignment(&c, &u);
        let direct: f64 = (0..3)
            .flat_map(|rho| (0..6).map(move |j| (rho, j)))
            .map(|(rho, j)| (c.get(rho, j).abs() - u.get(j, assignment[rho]).abs()).powi(2))
            .sum();
        assert!((est_mse_abs(&c, &u).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn genie_masks_and_normalizes() {
        let truth = Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]]);
        let noisy = Matrix::from_columns(&[vec![0.9, 0.1, -0.1], vec![0.1, 0.5, 0.9]]);
        let g = genie_pca(&noisy, &truth).unwrap();
        assert_eq!(g.col(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(g.get(0, 1), 0.0);
        assert!((g.col(1).iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stderr_is_sample_std_over_root_n() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn tally_keeps_first_seen_order() {
        let mut t = Tally::default();
        t.push("b", "x", 1.0);
        t.push("a", "x", 2.0);
        t.push("b", "x", 3.0);
        let rows = t.rows("e", 1.0).unwrap();
        assert_eq!(rows[0].method, "b");
        assert_eq!(rows[0].value, 2.0);
        assert_eq!(rows[0].runs, 2);
        assert_eq!(t.mean("a", "x"), Some(2.0));
        assert!(rows[0].csv_line().starts_with("e,1,b,x,2,"));
    }
}
