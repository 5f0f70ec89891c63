use super::tensor::{Scalar, Tensor};
use crate::error::{contract, Result};

/// Mean softmax cross entropy over the batch and its gradient
/// `(softmax - onehot) / B`.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[u8]) -> Result<(f64, Tensor<T>)> {
    let b = logits.batch();
    if b == 0 || labels.len() != b || logits.shape().len() != 2 {
        return Err(contract(format!(
            "cross_entropy: logits {:?} vs {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let k = logits.shape()[1];
    let mut grad = vec![T::zero(); logits.len()];
    let mut loss = 0.0;
    for (n, (row, &y)) in logits.values().chunks(k).zip(labels).enumerate() {
        let y = y as usize;
        if y >= k {
            return Err(contract(format!("label {y} out of range for {k} classes")));
        }
        let row: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap()).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y];
        for (j, v) in row.iter().enumerate() {
            let p = (v - lse).exp();
            let onehot = if j == y { 1.0 } else { 0.0 };
            grad[n * k + j] = T::of((p - onehot) / b as f64);
        }
    }
    Ok((loss / b as f64, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Index of the largest logit per row.
pub fn argmax<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let k = logits.shape().get(1).copied().unwrap_or(1);
    logits
        .values()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy<T: Scalar>(logits: &Tensor<T>, labels: &[u8]) -> f64 {
    let pred = argmax(logits);
    let hits = pred.iter().zip(labels).filter(|(&p, &y)| p == y as usize).count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn uniform_logits_cost_ln10() {
        let (loss, _) = cross_entropy(&Tensor::<f64>::zeros(vec![4, 10]), &[0, 3, 5, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_cost_nothing() {
        let mut l = Tensor::<f64>::zeros(vec![1, 10]);
        l.values_mut()[7] = 1e4;
        let (loss, g) = cross_entropy(&l, &[7]).unwrap();
        assert!(loss < 1e-12);
        assert!(g.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = crate::rng::RngState::from_seed(3);
        let vals: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = [1u8, 4, 9];
        let logits = Tensor::new(vec![3, 10], vals.clone()).unwrap();
        let (_, g) = cross_entropy(&logits, &labels).unwrap();
        let h = 1e-5;
        for i in 0..30 {
            let mut p = vals.clone();
            p[i] += h;
            let mut m = vals.clone();
            m[i] -= h;
            let lp = cross_entropy(&Tensor::new(vec![3, 10], p).unwrap(), &labels).unwrap().0;
            let lm = cross_entropy(&Tensor::new(vec![3, 10], m).unwrap(), &labels).unwrap().0;
            let num = (lp - lm) / (2.0 * h);
            let an = g.values()[i];
            assert!((num - an).abs() / an.abs().max(num.abs()).max(1e-8) <= 1e-4, "{i}: {num} vs {an}");
        }
    }

    #[test]
    fn accuracy_cases() {
        // Always predicts class 0 on a balanced set.
        let mut l = Tensor::<f32>::zeros(vec![20, 10]);
        for r in 0..20 {
            l.values_mut()[r * 10] = 1.0;
        }
        let labels: Vec<u8> = (0..20).map(|i| (i % 10) as u8).collect();
        assert!((accuracy(&l, &labels) - 0.1).abs() < 1e-12);
        // Perfect oracle, and invariance under positive scaling.
        let mut o = Tensor::<f32>::zeros(vec![20, 10]);
        for (r, &y) in labels.iter().enumerate() {
            o.values_mut()[r * 10 + y as usize] = 2.0;
            o.values_mut()[r * 10 + (y as usize + 1) % 10] = 1.0;
        }
        assert_eq!(accuracy(&o, &labels), 1.0);
        let scaled = Tensor::new(vec![20, 10], o.values().iter().map(|v| v * 37.5).collect()).unwrap();
        assert_eq!(accuracy(&scaled, &labels), 1.0);
    }

    #[test]
    fn label_checks() {
        assert!(cross_entropy(&Tensor::<f64>::zeros(vec![2, 10]), &[1]).is_err());
        assert!(cross_entropy(&Tensor::<f64>::zeros(vec![1, 10]), &[10]).is_err());
    }
}
