//! Loss terms on logit batches, each returning its value together with the
//! gradient with respect to the (first) logit argument.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{Classifier, Real};

/// Mean cross-entropy of `logits` (N×K) against class ids, and
/// d(loss)/d(logits) = (softmax − onehot) / N.
pub fn cross_entropy<F: Real>(logits: ArrayView2<'_, F>, labels: &[usize]) -> Result<(F, Array2<F>)> {
    let (n, k) = logits.dim();
    if labels.len() != n {
        return Err(Error::structural(format!("{n} logit rows but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::data(format!("label {bad} outside 0..{k}")));
    }
    if n == 0 {
        return Ok((F::zero(), Array2::zeros((0, k))));
    }
    let inv_n = F::one() / F::lit(n as f64);
    let mut grad = Array2::zeros((n, k));
    let mut total = F::zero();
    for ((row, mut g), &y) in logits.outer_iter().zip(grad.outer_iter_mut()).zip(labels) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for (gi, &z) in g.iter_mut().zip(row.iter()) {
            let e = (z - max).exp();
            *gi = e;
            denom += e;
        }
        total += denom.ln() + max - row[y];
        g.mapv_inplace(|e| e / denom * inv_n);
        g[y] -= inv_n;
    }
    Ok((total * inv_n, grad))
}

/// Mean squared error over every element, and d(loss)/d(a) = 2(a − b)/(N·K).
pub fn mse<F: Real>(a: ArrayView2<'_, F>, b: ArrayView2<'_, F>) -> Result<(F, Array2<F>)> {
    if a.dim() != b.dim() {
        return Err(Error::structural(format!("logit shapes differ: {:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.is_empty() {
        return Ok((F::zero(), Array2::zeros(a.raw_dim())));
    }
    let count = F::lit(a.len() as f64);
    let diff = &a - &b;
    let loss = diff.iter().map(|&d| d * d).sum::<F>() / count;
    let two_over = F::lit(2.0) / count;
    Ok((loss, diff.mapv(|d| d * two_over)))
}

/// Supervised term: CE on the current batch plus CE on the buffer batch
/// when there is one, each mean-reduced.
pub fn supervised_loss<F: Real>(
    cur_logits: ArrayView2<'_, F>,
    y_cur: &[usize],
    buf: Option<(ArrayView2<'_, F>, &[usize])>,
) -> Result<F> {
    let (mut loss, _) = cross_entropy(cur_logits, y_cur)?;
    if let Some((logits, y)) = buf {
        loss += cross_entropy(logits, y)?.0;
    }
    Ok(loss)
}

/// [`supervised_loss`] evaluated with a network in inference mode.
pub fn supervised_loss_on<F: Real>(
    net: &Classifier<F>,
    x_cur: &ndarray::Array4<F>,
    y_cur: &[usize],
    buf: Option<(&ndarray::Array4<F>, &[usize])>,
) -> Result<F> {
    let cur = net.predict(x_cur);
    let buf_logits = buf.map(|(x, y)| (net.predict(x), y));
    supervised_loss(cur.view(), y_cur, buf_logits.as_ref().map(|(l, y)| (l.view(), *y)))
}

/// Decision-space agreement between the RGB and shape networks: MSE of the
/// two logit batches.
pub fn biks_loss<F: Real>(wm_logits: ArrayView2<'_, F>, ibl_logits: ArrayView2<'_, F>) -> Result<F> {
    Ok(mse(wm_logits, ibl_logits)?.0)
}

/// Output-space alignment of a student with the (constant) memory logits.
pub fn ks_loss<F: Real>(sm_logits: ArrayView2<'_, F>, student_logits: ArrayView2<'_, F>) -> Result<F> {
    Ok(mse(student_logits, sm_logits)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};

    #[test]
    fn uniform_logits_give_ln_k() {
        let z = Array2::<f64>::zeros((4, 10));
        let (l, _) = cross_entropy(z.view(), &[0, 3, 9, 2]).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_prediction_has_zero_loss() {
        let mut z = Array2::<f64>::zeros((2, 3));
        z[[0, 1]] = 1e6;
        z[[1, 2]] = 1e6;
        let (l, g) = cross_entropy(z.view(), &[1, 2]).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn out_of_range_label_is_data_error() {
        let z = Array2::<f32>::zeros((1, 3));
        assert!(matches!(cross_entropy(z.view(), &[3]), Err(Error::Data(_))));
    }

    #[test]
    fn mse_hand_values() {
        assert_eq!(biks_loss(arr2(&[[1.0, 3.0]]).view(), arr2(&[[0.0, 1.0]]).view()).unwrap(), 2.5);
        assert_eq!(ks_loss(arr2(&[[2.0, 0.0]]).view(), arr2(&[[0.0, 0.0]]).view()).unwrap(), 2.0);
        let ones = Array2::<f64>::ones((3, 4));
        assert_eq!(biks_loss(ones.view(), Array2::zeros((3, 4)).view()).unwrap(), 1.0);
        assert!(mse(ones.view(), Array2::zeros((4, 3)).view()).is_err());
    }

    #[test]
    fn empty_buffer_leaves_current_term() {
        let z = arr2(&[[0.5f64, -0.5], [1.0, 2.0]]);
        let alone = cross_entropy(z.view(), &[0, 1]).unwrap().0;
        assert_eq!(supervised_loss(z.view(), &[0, 1], None).unwrap(), alone);
        let both = supervised_loss(z.view(), &[0, 1], Some((z.view(), &[0, 1]))).unwrap();
        assert!((both - 2.0 * alone).abs() < 1e-15);
    }
}
