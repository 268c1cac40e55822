use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradients with a dual norm below this are treated as zero.
pub const GRAD_NORM_FLOOR: f64 = 1e-12;

/// Which loss drives the ascent (perturbation) phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationWeighting {
    /// Unweighted mean loss (SAM).
    None,
    /// Importance-weighted loss from the bin weight table (BSAM).
    Table,
    /// Mean loss over Few-region samples only (ImbSAM).
    TailOnly,
}

/// Neighborhood radius and norm of the ascent step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub rho: f64,
    /// Primal norm exponent, `1 ≤ p ≤ ∞`.
    pub p: f64,
    pub weighting: PerturbationWeighting,
}

impl PerturbationSpec {
    pub fn new(rho: f64, weighting: PerturbationWeighting) -> Self {
        Self { rho, p: 2.0, weighting }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    /// Dual exponent with `1/p + 1/q = 1`.
    pub fn q(&self) -> f64 {
        if self.p == 1.0 {
            f64::INFINITY
        } else if self.p.is_infinite() {
            1.0
        } else {
            self.p / (self.p - 1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::contract(format!("rho must be finite and >= 0, got {}", self.rho)));
        }
        if !(self.p >= 1.0) {
            return Err(Error::contract(format!("norm exponent p must be >= 1, got {}", self.p)));
        }
        Ok(())
    }
}

fn lp_norm(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else if p == 2.0 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Maximizer of `εᵀg` over `‖ε‖_p ≤ ρ`:
/// `ε* = ρ·sign(g)·|g|^(q-1) / ‖g‖_q^(q/p)`.
///
/// Returns the zero vector when `ρ = 0` or `‖g‖_q` is below
/// [`GRAD_NORM_FLOOR`].
pub fn compute_perturbation(grad: &[f64], spec: &PerturbationSpec) -> Vec<f64> {
    let q = spec.q();
    let zero = vec![0.0; grad.len()];
    if spec.rho == 0.0 || lp_norm(grad, q) < GRAD_NORM_FLOOR {
        return zero;
    }
    if spec.p == 2.0 {
        let norm = lp_norm(grad, 2.0);
        return grad.iter().map(|g| spec.rho * g / norm).collect();
    }
    // The formula is invariant to positive rescaling of g, so work with
    // g/max|g| to keep the powers in range.
    let scale = lp_norm(grad, f64::INFINITY);
    let g: Vec<f64> = grad.iter().map(|x| x / scale).collect();
    if q.is_infinite() {
        // p = 1: all mass on the largest coordinate.
        let j = g
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > g[best].abs() { i } else { best });
        let mut eps = zero;
        eps[j] = spec.rho * sign(g[j]);
        return eps;
    }
    if spec.p.is_infinite() {
        return g.iter().map(|x| spec.rho * sign(*x)).collect();
    }
    let denom = lp_norm(&g, q).powf(q / spec.p);
    g.iter()
        .map(|x| spec.rho * sign(*x) * x.abs().powf(q - 1.0) / denom)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example_p2() {
        let spec = PerturbationSpec::new(0.1, PerturbationWeighting::None);
        let eps = compute_perturbation(&[3.0, 4.0], &spec);
        assert!((eps[0] - 0.06).abs() < 1e-15);
        assert!((eps[1] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn zero_radius_and_zero_gradient() {
        let spec = PerturbationSpec::new(0.0, PerturbationWeighting::None);
        assert_eq!(compute_perturbation(&[1.0, -2.0], &spec), vec![0.0, 0.0]);
        let spec = PerturbationSpec::new(0.5, PerturbationWeighting::None);
        assert_eq!(compute_perturbation(&[0.0, 1e-14], &spec), vec![0.0, 0.0]);
    }

    #[test]
    fn general_p_hits_the_sphere() {
        let g = [0.3, -1.2, 2.5, 0.0, -0.01];
        for p in [1.0, 1.5, 2.0, 3.0, 7.0, f64::INFINITY] {
            let spec = PerturbationSpec::new(0.2, PerturbationWeighting::None).with_p(p);
            let eps = compute_perturbation(&g, &spec);
            assert!((lp_norm(&eps, p) - 0.2).abs() < 1e-12, "p = {p}");
            // Hölder: εᵀg = ρ‖g‖_q at the maximizer.
            let dot: f64 = eps.iter().zip(&g).map(|(a, b)| a * b).sum();
            assert!((dot - 0.2 * lp_norm(&g, spec.q())).abs() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn dual_exponents() {
        let q = |p: f64| PerturbationSpec::new(1.0, PerturbationWeighting::None).with_p(p).q();
        assert_eq!(q(2.0), 2.0);
        assert_eq!(q(1.0), f64::INFINITY);
        assert_eq!(q(f64::INFINITY), 1.0);
        assert!((1.0 / 3.0 + 1.0 / q(3.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(PerturbationSpec::new(-0.1, PerturbationWeighting::None).validate().is_err());
        assert!(PerturbationSpec::new(0.1, PerturbationWeighting::None).with_p(0.5).validate().is_err());
        assert!(PerturbationSpec::new(0.1, PerturbationWeighting::Table).validate().is_ok());
    }
}
