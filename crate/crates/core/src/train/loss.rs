//! Batch losses. Each example's penalty is summed over its pixels; the batch
//! loss is the mean over examples.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Loss {
    /// Sum of squared residuals.
    Mse,
    /// Smoothed `sum |r|^p`, with `|r|` replaced by `sqrt(r^2 + eps^2)`.
    PNorm { p: f64, eps: f64 },
    /// `(sum |r|^p)^(1/p)` with the same smoothing.
    PNormRoot { p: f64, eps: f64 },
}

pub const DEFAULT_P: f64 = 0.9;
pub const DEFAULT_PNORM_EPS: f64 = 1e-6;

impl Loss {
    pub fn pnorm() -> Self {
        Loss::PNorm { p: DEFAULT_P, eps: DEFAULT_PNORM_EPS }
    }

    fn check(&self) -> Result<()> {
        match *self {
            Loss::Mse => Ok(()),
            Loss::PNorm { p, eps } | Loss::PNormRoot { p, eps } => {
                if !(p > 0.0 && p <= 1.0) || !(eps >= 0.0) {
                    Err(Error::Invalid(format!("p-norm needs p in (0, 1] and eps >= 0, got p={p} eps={eps}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Batch loss and its gradient with respect to every prediction.
    pub fn value_and_grad(&self, preds: &[&[f64]], labels: &[&[f64]]) -> Result<(f64, Vec<Vec<f64>>)> {
        self.check()?;
        if preds.len() != labels.len() || preds.is_empty() {
            return Err(Error::Shape(format!("{} predictions, {} labels", preds.len(), labels.len())));
        }
        let n = preds.len() as f64;
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(preds.len());
        for (p, y) in preds.iter().zip(labels) {
            if p.len() != y.len() {
                return Err(Error::Shape(format!("prediction {} vs label {}", p.len(), y.len())));
            }
            let (v, g) = match *self {
                Loss::Mse => {
                    let v: f64 = p.iter().zip(*y).map(|(a, b)| (a - b) * (a - b)).sum();
                    (v, p.iter().zip(*y).map(|(a, b)| 2.0 * (a - b) / n).collect())
                }
                Loss::PNorm { p: e, eps } => {
                    let mut v = 0.0;
                    let mut g = Vec::with_capacity(p.len());
                    for (a, b) in p.iter().zip(*y) {
                        let r = a - b;
                        let s = r * r + eps * eps;
                        v += s.powf(e / 2.0);
                        g.push(e * r * s.powf(e / 2.0 - 1.0) / n);
                    }
                    (v, g)
                }
                Loss::PNormRoot { p: e, eps } => {
                    let terms: Vec<(f64, f64)> =
                        p.iter().zip(*y).map(|(a, b)| (a - b, (a - b) * (a - b) + eps * eps)).collect();
                    let inner: f64 = terms.iter().map(|(_, s)| s.powf(e / 2.0)).sum();
                    let outer = inner.powf(1.0 / e - 1.0);
                    let g = terms.iter().map(|(r, s)| outer * r * s.powf(e / 2.0 - 1.0) / n).collect();
                    (inner.powf(1.0 / e), g)
                }
            };
            total += v;
            grads.push(g);
        }
        Ok((total / n, grads))
    }

    pub fn value(&self, preds: &[&[f64]], labels: &[&[f64]]) -> Result<f64> {
        Ok(self.value_and_grad(preds, labels)?.0)
    }
}

pub fn loss_mse(preds: &[&[f64]], labels: &[&[f64]]) -> Result<f64> {
    Loss::Mse.value(preds, labels)
}

pub fn loss_pnorm(preds: &[&[f64]], labels: &[&[f64]], p: f64, eps: f64) -> Result<f64> {
    Loss::PNorm { p, eps }.value(preds, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(loss_mse(&[&[1.0, 2.0]], &[&[1.0, 2.0]]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[&[2.0]], &[&[0.0]]).unwrap(), 4.0);
        // Per-example sums 4 and 16.
        assert_eq!(loss_mse(&[&[2.0, 0.0], &[4.0, 0.0]], &[&[0.0, 0.0], &[0.0, 0.0]]).unwrap(), 10.0);
    }

    #[test]
    fn pnorm_examples() {
        assert!(loss_pnorm(&[&[3.0]], &[&[3.0]], 0.9, 0.0).unwrap() == 0.0);
        assert!(loss_pnorm(&[&[3.0]], &[&[3.0]], 0.9, 1e-6).unwrap() < 1e-5);
        assert!((loss_pnorm(&[&[1.0]], &[&[0.0]], 0.9, 1e-6).unwrap() - 1.0).abs() < 1e-9);
        let v = loss_pnorm(&[&[0.5]], &[&[0.0]], 0.9, 1e-6).unwrap();
        assert!((v - 0.5f64.powf(0.9)).abs() < 1e-9);
        assert!((v - 0.53589).abs() < 1e-5);
    }

    #[test]
    fn root_variant() {
        let v = Loss::PNormRoot { p: 0.5, eps: 0.0 }.value(&[&[1.0, 4.0]], &[&[0.0, 0.0]]).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
    }

    #[test]
    fn bad_p_rejected() {
        assert!(loss_pnorm(&[&[1.0]], &[&[0.0]], 1.5, 1e-6).is_err());
        assert!(loss_pnorm(&[&[1.0]], &[&[0.0]], 0.0, 1e-6).is_err());
    }

    #[test]
    fn gradients_match_differences() {
        let preds = [vec![0.3, -1.2, 2.0], vec![0.9, 0.1, -0.4]];
        let labels = [vec![0.0, 0.5, 1.0], vec![-0.2, 1.1, 0.3]];
        for loss in [Loss::Mse, Loss::pnorm(), Loss::PNormRoot { p: 0.9, eps: 1e-6 }] {
            let lr: Vec<&[f64]> = labels.iter().map(|v| v.as_slice()).collect();
            let pr: Vec<&[f64]> = preds.iter().map(|v| v.as_slice()).collect();
            let (_, g) = loss.value_and_grad(&pr, &lr).unwrap();
            for e in 0..2 {
                for k in 0..3 {
                    let h = 1e-6;
                    let mut up = preds.clone();
                    up[e][k] += h;
                    let mut dn = preds.clone();
                    dn[e][k] -= h;
                    let f = |p: &[Vec<f64>]| {
                        let pr: Vec<&[f64]> = p.iter().map(|v| v.as_slice()).collect();
                        loss.value(&pr, &lr).unwrap()
                    };
                    let num = (f(&up) - f(&dn)) / (2.0 * h);
                    assert!((num - g[e][k]).abs() < 1e-6 * num.abs().max(1.0), "{loss:?}");
                }
            }
        }
    }
}
