//! Monomial expansion of a neuron's inputs.
//!
//! Ordering: the constant `1`, then `x_i` in index order, then for degree 2
//! the products `x_i·x_j` with `i <= j` in lexicographic order.

use crate::error::{Error, Result};

/// Number of monomials of total degree `<= degree` in `fanin` variables,
/// `C(fanin + degree, degree)`.
pub fn poly_len(fanin: usize, degree: u32) -> usize {
    match degree {
        0 => 1,
        1 => fanin + 1,
        2 => (fanin + 1) * (fanin + 2) / 2,
        d => {
            let mut c = 1usize;
            for k in 1..=d as usize {
                c = c * (fanin + k) / k;
            }
            c
        }
    }
}

pub fn poly_features(x: &[f64], degree: u32) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(poly_len(x.len(), degree));
    poly_features_into(x, degree, &mut out)?;
    Ok(out)
}

/// Writes the expansion into `out`, replacing its contents.
pub fn poly_features_into(x: &[f64], degree: u32, out: &mut Vec<f64>) -> Result<()> {
    if !(1..=2).contains(&degree) {
        return Err(Error::invalid_arg(format!("polynomial degree {degree} not in {{1, 2}}")));
    }
    out.clear();
    out.push(1.0);
    out.extend_from_slice(x);
    if degree == 2 {
        for i in 0..x.len() {
            for j in i..x.len() {
                out.push(x[i] * x[j]);
            }
        }
    }
    Ok(())
}

/// `∂(Σ_m w_m·φ_m(x))/∂x` accumulated into `grad` scaled by `upstream`.
pub fn poly_input_grad(x: &[f64], weights: &[f64], degree: u32, upstream: f64, grad: &mut [f64]) {
    let f = x.len();
    for i in 0..f {
        grad[i] += upstream * weights[1 + i];
    }
    if degree == 2 {
        let mut m = 1 + f;
        for i in 0..f {
            for j in i..f {
                let w = weights[m] * upstream;
                if i == j {
                    grad[i] += 2.0 * w * x[i];
                } else {
                    grad[i] += w * x[j];
                    grad[j] += w * x[i];
                }
                m += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
    }

    #[test]
    fn linear_and_quadratic_examples() {
        assert_eq!(poly_features(&[2.0, 3.0], 1).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(
            poly_features(&[2.0, 3.0], 2).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]
        );
        assert_eq!(poly_features(&[0.1; 6], 2).unwrap().len(), 28);
    }

    #[test]
    fn lengths_match_binomial() {
        for f in 1..=8usize {
            for d in 1..=2u32 {
                let want = binomial((f + d as usize) as u64, d as u64) as usize;
                assert_eq!(poly_len(f, d), want);
                assert_eq!(poly_features(&vec![0.5; f], d).unwrap().len(), want);
            }
        }
    }

    #[test]
    fn unsupported_degree() {
        assert!(poly_features(&[1.0], 3).is_err());
    }

    #[test]
    fn input_grad_matches_finite_difference() {
        let x = [0.3, -0.7, 1.1];
        let w: Vec<f64> = (0..poly_len(3, 2)).map(|m| 0.1 * m as f64 - 0.4).collect();
        let f = |x: &[f64]| -> f64 {
            poly_features(x, 2).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let mut g = [0.0; 3];
        poly_input_grad(&x, &w, 2, 1.0, &mut g);
        for i in 0..3 {
            let h = 1e-6;
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "{i}: {fd} vs {}", g[i]);
        }
    }
}
