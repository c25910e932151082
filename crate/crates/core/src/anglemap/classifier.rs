//! Logistic blockage classifier over standardised `(x, y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BlockageFlag;

/// Ridge strength on all three weights, bias included, which keeps the
/// Newton fit finite on separable data and symmetric under label flips.
const L2: f64 = 1e-3;
const NEWTON_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockageClassifier {
    pub mean: [f64; 2],
    pub scale: [f64; 2],
    /// `[bias, w_x, w_y]`; positive logit means LoS.
    pub weights: [f64; 3],
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Solves the 3×3 symmetric system by Gaussian elimination with pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

impl BlockageClassifier {
    /// Newton iterations on the L2-regularised log-likelihood.
    pub fn fit(points: &[[f64; 2]], labels: &[BlockageFlag]) -> Result<Self> {
        if points.is_empty() || points.len() != labels.len() {
            return Err(Error::Contract(format!("{} points for {} labels", points.len(), labels.len())));
        }
        let n = points.len() as f64;
        let mut mean = [0.0; 2];
        let mut scale = [0.0; 2];
        for d in 0..2 {
            mean[d] = points.iter().map(|p| p[d]).sum::<f64>() / n;
            let var = points.iter().map(|p| (p[d] - mean[d]).powi(2)).sum::<f64>() / n;
            scale[d] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let feats: Vec<[f64; 3]> =
            points.iter().map(|p| [1.0, (p[0] - mean[0]) / scale[0], (p[1] - mean[1]) / scale[1]]).collect();
        let ys: Vec<f64> = labels.iter().map(|l| if l.is_los() { 1.0 } else { 0.0 }).collect();
        let mut w = [0.0; 3];
        for _ in 0..NEWTON_STEPS {
            let mut grad = [0.0; 3];
            let mut hess = [[0.0; 3]; 3];
            for (f, y) in feats.iter().zip(&ys) {
                let z: f64 = (0..3).map(|k| w[k] * f[k]).sum();
                let p = sigmoid(z);
                let r = p * (1.0 - p);
                for i in 0..3 {
                    grad[i] += (p - y) * f[i];
                    for j in 0..3 {
                        hess[i][j] += r * f[i] * f[j];
                    }
                }
            }
            for i in 0..3 {
                grad[i] = grad[i] / n + L2 * w[i];
                for j in 0..3 {
                    hess[i][j] /= n;
                }
                hess[i][i] += L2;
            }
            let step = solve3(hess, grad).ok_or(Error::Singular { condition: f64::INFINITY })?;
            for i in 0..3 {
                w[i] -= step[i];
            }
            if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-12 {
                break;
            }
        }
        Ok(Self { mean, scale, weights: w })
    }

    pub fn probability_los(&self, xy: [f64; 2]) -> f64 {
        let fx = (xy[0] - self.mean[0]) / self.scale[0];
        let fy = (xy[1] - self.mean[1]) / self.scale[1];
        sigmoid(self.weights[0] + self.weights[1] * fx + self.weights[2] * fy)
    }

    /// LoS when the logistic output reaches 0.5.
    pub fn classify(&self, xy: [f64; 2]) -> BlockageFlag {
        if self.probability_los(xy) >= 0.5 {
            BlockageFlag::Los
        } else {
            BlockageFlag::Nlos
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SyntheticScene;

    fn data(n: usize, seed: u64) -> (Vec<[f64; 2]>, Vec<BlockageFlag>) {
        let g = SyntheticScene::default().generate(n, 1.0, seed).unwrap();
        (g.records.iter().map(|r| r.ue_xy).collect(), g.records.iter().map(|r| r.blockage).collect())
    }

    #[test]
    fn separates_the_two_zones() {
        let (xs, ys) = data(400, 1);
        let c = BlockageClassifier::fit(&xs, &ys).unwrap();
        let (tx, ty) = data(1000, 2);
        let hits = tx.iter().zip(&ty).filter(|(x, y)| c.classify(**x) == **y).count();
        assert!(hits as f64 / tx.len() as f64 >= 0.99);
    }

    #[test]
    fn flipped_labels_flip_predictions() {
        let (xs, ys) = data(200, 3);
        let flipped: Vec<_> = ys.iter().map(|y| if y.is_los() { BlockageFlag::Nlos } else { BlockageFlag::Los }).collect();
        let a = BlockageClassifier::fit(&xs, &ys).unwrap();
        let b = BlockageClassifier::fit(&xs, &flipped).unwrap();
        for k in 0..3 {
            assert!((a.weights[k] + b.weights[k]).abs() <= 1e-9 * a.weights[k].abs().max(1.0));
        }
        let (tx, _) = data(300, 4);
        for x in tx {
            assert_ne!(a.classify(x), b.classify(x));
        }
    }

    #[test]
    fn threshold_is_one_half() {
        let c = BlockageClassifier { mean: [0.0, 0.0], scale: [1.0, 1.0], weights: [0.0, 1.0, 0.0] };
        assert_eq!(c.classify([0.0, 5.0]), BlockageFlag::Los);
        assert_eq!(c.classify([-1e-9, 5.0]), BlockageFlag::Nlos);
    }

    #[test]
    fn rejects_empty_input() {
        assert!(BlockageClassifier::fit(&[], &[]).is_err());
    }
}
