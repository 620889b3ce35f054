//! Scaling-law fits for the two regimes and a convexity diagnostic.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{usage, Error, Result};

/// A measured `χ̂(β)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub beta: f64,
    pub chi: f64,
    pub se: f64,
}

/// Straight-line fit `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 95% interval for the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    pub r_squared: f64,
    pub reduced_chi_square: f64,
    pub weighted: bool,
    pub points: usize,
}

/// Weighted least squares with weights `1/var`; unweighted when any variance is
/// zero. The slope error is scaled by the reduced chi-square when it exceeds 1.
pub fn fit_line(x: &[f64], y: &[f64], var: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 3 || y.len() != n || var.len() != n {
        return usage("a line fit needs at least 3 points");
    }
    let weighted = var.iter().all(|&v| v > 0.0 && v.is_finite());
    let w: Vec<f64> = if weighted { var.iter().map(|v| 1.0 / v).collect() } else { vec![1.0; n] };
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain("degenerate spread in the abscissa".into()));
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - mx) * (y[i] - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let tss: f64 = (0..n).map(|i| w[i] * (y[i] - my).powi(2)).sum();
    let dof = (n - 2) as f64;
    let reduced = rss / dof;
    let slope_se = if weighted {
        (reduced.max(1.0) / sxx).sqrt()
    } else {
        (reduced / sxx).sqrt()
    };
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Domain(e.to_string()))?.inverse_cdf(0.975);
    Ok(LineFit {
        slope,
        intercept,
        slope_se,
        ci_low: slope - t * slope_se,
        ci_high: slope + t * slope_se,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
        reduced_chi_square: reduced,
        weighted,
        points: n,
    })
}

/// Fit of `log χ̂` against `log β`.
pub fn fit_power_law(points: &[FitPoint]) -> Result<LineFit> {
    if points.len() < 5 {
        return usage(format!("a power-law fit needs at least 5 points, got {}", points.len()));
    }
    check_positive(points)?;
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.beta), hi.max(p.beta)));
    if !(hi >= 10.0 * lo) {
        return Err(Error::Domain(format!("beta must span a decade, got [{lo}, {hi}]")));
    }
    let x: Vec<f64> = points.iter().map(|p| p.beta.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.chi.ln()).collect();
    let var: Vec<f64> = points.iter().map(|p| (p.se / p.chi).powi(2)).collect();
    fit_line(&x, &y, &var)
}

fn check_positive(points: &[FitPoint]) -> Result<()> {
    for p in points {
        if !(p.beta > 0.0 && p.chi > 0.0 && p.se >= 0.0) {
            return Err(Error::Domain(format!("fit point needs beta, chi > 0 and se >= 0: {p:?}")));
        }
    }
    Ok(())
}

/// One second divided difference of `log χ̂` in `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Curvature {
    pub beta: f64,
    pub value: f64,
    pub se: f64,
}

/// Evidence that `log χ̂` is convex in `β`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub differences: Vec<Curvature>,
    /// Every difference is at least `-2` joint SE.
    pub nonnegative: bool,
    /// Smallest `value / se` (or the sign when the SE vanishes).
    pub min_z: f64,
    /// Log-log quadratic coefficient: curvature of `log χ̂` against `log β`.
    pub power_curvature: f64,
    pub power_curvature_se: f64,
    /// The log-log curvature is significant at 3 SE: no single power law fits.
    pub flags_non_power_law: bool,
    pub double_exponential_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleExpFit {
    /// Fit of `log log χ̂` against `β`.
    pub line: LineFit,
    pub convexity: ConvexityReport,
}

pub fn fit_double_exp(points: &[FitPoint]) -> Result<DoubleExpFit> {
    if points.len() < 3 {
        return usage("a double-exponential fit needs at least 3 points");
    }
    check_positive(points)?;
    if let Some(p) = points.iter().find(|p| p.chi <= 1.0) {
        return Err(Error::Domain(format!("log log chi undefined at beta = {} (chi = {})", p.beta, p.chi)));
    }
    let x: Vec<f64> = points.iter().map(|p| p.beta).collect();
    let y: Vec<f64> = points.iter().map(|p| p.chi.ln().ln()).collect();
    let var: Vec<f64> = points.iter().map(|p| (p.se / (p.chi * p.chi.ln())).powi(2)).collect();
    let line = fit_line(&x, &y, &var)?;
    Ok(DoubleExpFit { line, convexity: convexity(points)? })
}

/// Second divided differences of `log χ̂` in `β` plus a log-log curvature test.
pub fn convexity(points: &[FitPoint]) -> Result<ConvexityReport> {
    check_positive(points)?;
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let y: Vec<f64> = sorted.iter().map(|p| p.chi.ln()).collect();
    let v: Vec<f64> = sorted.iter().map(|p| (p.se / p.chi).powi(2)).collect();
    let mut differences = Vec::new();
    for i in 1..sorted.len().saturating_sub(1) {
        let (h1, h2) = (sorted[i].beta - sorted[i - 1].beta, sorted[i + 1].beta - sorted[i].beta);
        if !(h1 > 0.0 && h2 > 0.0) {
            return Err(Error::Domain("beta grid must be strictly increasing".into()));
        }
        let c = [2.0 / (h1 * (h1 + h2)), -2.0 / (h1 * h2), 2.0 / (h2 * (h1 + h2))];
        let value = c[0] * y[i - 1] + c[1] * y[i] + c[2] * y[i + 1];
        let se = (c[0] * c[0] * v[i - 1] + c[1] * c[1] * v[i] + c[2] * c[2] * v[i + 1]).sqrt();
        differences.push(Curvature { beta: sorted[i].beta, value, se });
    }
    let z = |d: &Curvature| match (d.se > 0.0, d.value == 0.0) {
        (true, _) => d.value / d.se,
        (false, true) => 0.0,
        (false, false) => d.value.signum() * f64::INFINITY,
    };
    let min_z = differences.iter().map(z).fold(f64::INFINITY, f64::min);
    let nonnegative = differences.iter().all(|d| d.value >= -2.0 * d.se);
    let (power_curvature, power_curvature_se) = log_log_curvature(&sorted)?;
    let flags_non_power_law = power_curvature.abs() > 3.0 * power_curvature_se && power_curvature.abs() > 1e-8;
    let convex_somewhere = differences.iter().map(|d| d.value).sum::<f64>() > 0.0;
    Ok(ConvexityReport {
        double_exponential_consistent: nonnegative && convex_somewhere && flags_non_power_law && power_curvature > 0.0,
        differences,
        nonnegative,
        min_z,
        power_curvature,
        power_curvature_se,
        flags_non_power_law,
    })
}

/// Quadratic coefficient and its SE from fitting `log χ̂ = a + b t + c t²`, `t = log β`.
fn log_log_curvature(points: &[FitPoint]) -> Result<(f64, f64)> {
    let n = points.len();
    if n < 4 {
        return usage("a curvature test needs at least 4 points");
    }
    let weighted = points.iter().all(|p| p.se > 0.0);
    let rows: Vec<([f64; 3], f64, f64)> = points
        .iter()
        .map(|p| {
            let t = p.beta.ln();
            let w = if weighted { (p.chi / p.se).powi(2) } else { 1.0 };
            ([1.0, t, t * t], p.chi.ln(), w)
        })
        .collect();
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (a, b, w) in &rows {
        for i in 0..3 {
            atb[i] += w * a[i] * b;
            for j in 0..3 {
                ata[i][j] += w * a[i] * a[j];
            }
        }
    }
    let inv = invert3(&ata).ok_or_else(|| Error::Domain("singular curvature design".into()))?;
    let coef: Vec<f64> = (0..3).map(|i| (0..3).map(|j| inv[i][j] * atb[j]).sum()).collect();
    let rss: f64 = rows
        .iter()
        .map(|(a, b, w)| w * (b - (0..3).map(|i| a[i] * coef[i]).sum::<f64>()).powi(2))
        .sum();
    let reduced = rss / (n - 3) as f64;
    let scale = if weighted { reduced.max(1.0) } else { reduced };
    Ok((coef[2], (inv[2][2] * scale).sqrt()))
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
    }

    #[test]
    fn exact_power_law() {
        let points: Vec<FitPoint> = grid(1.0, 100.0, 8).into_iter().map(|b| FitPoint { beta: b, chi: b * b, se: 0.0 }).collect();
        let fit = fit_power_law(&points).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-6);
        assert!(!fit.weighted);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let points: Vec<FitPoint> = grid(1.0, 1000.0, 12)
            .into_iter()
            .map(|b| {
                let chi = 3.0 * b.powf(1.5);
                let noise = 1.0 + 0.01 * (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt();
                FitPoint { beta: b, chi: chi * noise, se: 0.01 * chi }
            })
            .collect();
        let fit = fit_power_law(&points).unwrap();
        assert!(fit.slope >= 1.45 && fit.slope <= 1.55, "{fit:?}");
        assert!(fit.ci_low < 1.5 && fit.ci_high > 1.5);
        let report = convexity(&points).unwrap();
        assert!(!report.double_exponential_consistent);
    }

    #[test]
    fn exact_double_exponential() {
        let points: Vec<FitPoint> = (0..10)
            .map(|i| {
                let beta = 5.0 + i as f64;
                FitPoint { beta, chi: (0.3f64 * beta).exp().exp(), se: 0.0 }
            })
            .collect();
        let fit = fit_double_exp(&points).unwrap();
        assert!((fit.line.slope - 0.3).abs() < 0.01);
        assert!(fit.convexity.nonnegative);
        assert!(fit.convexity.flags_non_power_law);
        assert!(fit.convexity.double_exponential_consistent);
    }

    #[test]
    fn power_law_is_not_double_exponential() {
        let points: Vec<FitPoint> = grid(2.0, 50.0, 10).into_iter().map(|b| FitPoint { beta: b, chi: 10.0 * b * b, se: 0.0 }).collect();
        let report = convexity(&points).unwrap();
        assert!(!report.nonnegative);
        assert!(!report.flags_non_power_law);
        assert!(!report.double_exponential_consistent);
    }

    #[test]
    fn rejects_bad_inputs() {
        let few: Vec<FitPoint> = (1..4).map(|b| FitPoint { beta: b as f64, chi: 5.0, se: 0.1 }).collect();
        assert!(fit_power_law(&few).is_err());
        let narrow: Vec<FitPoint> = (1..7).map(|b| FitPoint { beta: 1.0 + b as f64 * 0.1, chi: 5.0, se: 0.1 }).collect();
        assert!(fit_power_law(&narrow).is_err());
        let small = vec![FitPoint { beta: 1.0, chi: 2.0, se: 0.1 }; 5];
        assert!(fit_double_exp(&small).is_err());
    }

    #[test]
    fn inverse_is_correct() {
        let m = [[4.0, 1.0, 2.0], [1.0, 3.0, 0.5], [2.0, 0.5, 5.0]];
        let inv = invert3(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
