//! Short-term model: probability of an immediate listen when an item is
//! promoted, as a logistic function of taste alignment and context.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{Context, Trajectory};
use crate::error::{Error, Result};
use crate::simulator::ItemInfo;
use crate::stats::{logistic, softplus};

/// Feature layout: `[u·ν, day-of-week one-hot × 7, ln(1 + recency), bias]`.
pub const N_FEATURES: usize = 10;

const MAX_ITERATIONS: usize = 50;
const RIDGE: f64 = 1e-6;

/// Logistic-linear clickiness model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickinessModel {
    pub weights: Vec<f64>,
}

impl Default for ClickinessModel {
    fn default() -> Self {
        Self {
            weights: vec![0.0; N_FEATURES],
        }
    }
}

/// One promoted impression and whether it produced a listen.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickExample {
    pub nu: Vec<f64>,
    pub u: Vec<f64>,
    pub context: Context,
    pub listened: bool,
}

pub fn features(nu: &[f64], u: &[f64], x: &Context) -> [f64; N_FEATURES] {
    let mut f = [0.0; N_FEATURES];
    f[0] = nu.iter().zip(u).map(|(a, b)| a * b).sum();
    f[1 + (x.day_of_week % 7) as usize] = 1.0;
    f[8] = x.days_since_active.max(0.0).ln_1p();
    f[9] = 1.0;
    f
}

fn linear(weights: &[f64], f: &[f64; N_FEATURES]) -> f64 {
    weights.iter().zip(f).map(|(w, x)| w * x).sum()
}

/// Predicted listen probability, strictly inside (0, 1).
pub fn predict_click(model: &ClickinessModel, nu: &[f64], u: &[f64], x: &Context) -> f64 {
    let p = logistic(linear(&model.weights, &features(nu, u, x)));
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

fn loss(weights: &[f64], rows: &[([f64; N_FEATURES], bool)]) -> f64 {
    let total: f64 = rows
        .iter()
        .map(|(f, y)| {
            let s = linear(weights, f);
            if *y {
                softplus(-s)
            } else {
                softplus(s)
            }
        })
        .sum();
    total / rows.len() as f64
}

/// Average cross-entropy of `model` on `examples`.
pub fn cross_entropy(model: &ClickinessModel, examples: &[ClickExample]) -> f64 {
    let rows: Vec<_> = examples
        .iter()
        .map(|e| (features(&e.nu, &e.u, &e.context), e.listened))
        .collect();
    loss(&model.weights, &rows)
}

/// Fits the model by damped Newton steps from all-zero weights.
///
/// Each accepted step never increases the average cross-entropy, and the
/// iteration budget is fixed, so the result is deterministic.
pub fn train_clickiness(examples: &[ClickExample]) -> Result<ClickinessModel> {
    let positives = examples.iter().filter(|e| e.listened).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::Unlearnable(format!(
            "{} examples with {} positives: both classes are required",
            examples.len(),
            positives
        )));
    }
    let rows: Vec<_> = examples
        .iter()
        .map(|e| (features(&e.nu, &e.u, &e.context), e.listened))
        .collect();
    let n = rows.len() as f64;
    let mut w = vec![0.0; N_FEATURES];
    let mut current = loss(&w, &rows);
    for _ in 0..MAX_ITERATIONS {
        let mut grad = DVector::<f64>::zeros(N_FEATURES);
        let mut hess = DMatrix::<f64>::identity(N_FEATURES, N_FEATURES) * RIDGE;
        for (f, y) in &rows {
            let p = logistic(linear(&w, f));
            let r = p - if *y { 1.0 } else { 0.0 };
            let s = p * (1.0 - p);
            for i in 0..N_FEATURES {
                grad[i] += r * f[i] / n;
                if f[i] == 0.0 {
                    continue;
                }
                for j in 0..N_FEATURES {
                    hess[(i, j)] += s * f[i] * f[j] / n;
                }
            }
        }
        if grad.norm() < 1e-10 {
            break;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(a, d)| a - t * d).collect();
            let l = loss(&trial, &rows);
            if l <= current {
                improved = l < current;
                w = trial;
                current = l;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(ClickinessModel { weights: w })
}

/// Promoted impressions of items the user had never listened to before.
///
/// `items` supplies the public embedding of each item.
pub fn build_click_dataset(trajectories: &[Trajectory], items: &[ItemInfo]) -> Vec<ClickExample> {
    let mut out = Vec::new();
    for traj in trajectories {
        let contexts = traj.contexts();
        let mut seen = std::collections::BTreeSet::new();
        for (day, x) in traj.days.iter().zip(contexts) {
            if let Some(a) = day.star() {
                if !seen.contains(&a) {
                    if let Some(info) = items.get(a.index()) {
                        out.push(ClickExample {
                            nu: info.embedding.clone(),
                            u: traj.taste.clone(),
                            context: x,
                            listened: crate::domain::consumption(day, a) > 0.0,
                        });
                    }
                }
            }
            for (&a, &y) in day.actions.iter().zip(&day.engagements) {
                if y > 0.0 {
                    seen.insert(a);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn ex(dot: f64, listened: bool) -> ClickExample {
        ClickExample {
            nu: vec![dot],
            u: vec![1.0],
            context: Context::default(),
            listened,
        }
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = ClickinessModel::default();
        assert_eq!(predict_click(&m, &[1.0, 2.0], &[3.0, 4.0], &Context::default()), 0.5);
        let balanced = vec![ex(1.0, true), ex(-1.0, false), ex(0.3, true), ex(2.0, false)];
        assert!((cross_entropy(&m, &balanced) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn dot_weight_substitution() {
        let mut m = ClickinessModel::default();
        m.weights[0] = 1.0;
        let p = predict_click(&m, &[1.0, 1.0], &[1.0, 1.0], &Context::default());
        assert!((p - logistic(2.0)).abs() < 1e-15);
        let q = predict_click(&m, &[1.0, 1.0], &[1.0, 1.0], &Context::default());
        assert_eq!(p, q);
        let lower = predict_click(&m, &[0.5, 1.0], &[1.0, 1.0], &Context::default());
        assert!(lower < p);
    }

    #[test]
    fn separable_set_is_fit() {
        let data = vec![ex(-2.0, false), ex(-1.0, false), ex(1.0, true), ex(2.0, true)];
        let m = train_clickiness(&data).unwrap();
        assert!(cross_entropy(&m, &data) < 0.1);
    }

    #[test]
    fn single_class_is_rejected() {
        let data = vec![ex(-2.0, true), ex(1.0, true)];
        assert!(matches!(train_clickiness(&data), Err(Error::Unlearnable(_))));
        assert!(train_clickiness(&[]).is_err());
    }

    #[test]
    fn independent_labels_recover_base_rate() {
        let mut rng = rng_for(3, &[]);
        let data: Vec<ClickExample> = (0..100_000)
            .map(|i| ClickExample {
                nu: vec![rng.random::<f64>() - 0.5, rng.random::<f64>()],
                u: vec![1.0, rng.random::<f64>() * 2.0],
                context: Context {
                    day_of_week: (i % 7) as u8,
                    days_since_active: (i % 5) as f64,
                },
                listened: rng.random::<f64>() < 0.3,
            })
            .collect();
        let m = train_clickiness(&data).unwrap();
        let base = data.iter().filter(|e| e.listened).count() as f64 / data.len() as f64;
        for e in data.iter().take(200) {
            let p = predict_click(&m, &e.nu, &e.u, &e.context);
            assert!((p - base).abs() < 0.02, "{p} vs {base}");
        }
        assert!(cross_entropy(&m, &data) <= cross_entropy(&ClickinessModel::default(), &data));
    }
}
